"""Asynchronous single-spin descent under the exact and discretized rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .problem import ProblemInstance, as_spins, energy
from .quantizer import QuantizedProblem

DEFAULT_MAX_SWEEPS = 200


class NonConvergenceError(RuntimeError):
    """Raised when a descent exhausts its sweep budget; ``record`` holds the partial result."""

    def __init__(self, message: str, record: "MinimumRecord"):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class MinimumRecord:
    state: np.ndarray
    energy: float
    flips: int
    sweeps: int
    r: float
    trace: list = field(default_factory=list, repr=False, compare=False)


@dataclass(frozen=True)
class HybridResult:
    s_star: np.ndarray
    s0: np.ndarray
    E_star: float
    E0: float
    delta_E: float
    d: int
    r: float


def depth(E: float, sigma_A: float, n: int) -> float:
    """Normalized depth ``r = -2E / (sigma_A * N^{3/2})``."""
    return -2.0 * E / (sigma_A * n ** 1.5)


class ExactFields:
    """Spin state plus incrementally maintained exact local fields."""

    def __init__(self, inst: ProblemInstance, state):
        self.inst = inst
        self.s = np.array(as_spins(state, inst.N), dtype=np.float64)
        self.H = inst.B + inst.A @ self.s
        self.energy = energy(inst, self.s)

    def field(self, i: int) -> float:
        return self.H[i]

    def flip(self, i: int) -> float:
        """Flip spin ``i``; returns the change in energy."""
        dE = 2.0 * self.s[i] * self.H[i]
        self.s[i] = -self.s[i]
        self.H += (2.0 * self.s[i]) * self.inst.A[i]
        self.energy += dE
        return dE

    def final_energy(self) -> float:
        return energy(self.inst, self.s)


class QuantizedFields:
    """Discretized fields ``h_i = b_i + a0 * sum_{j!=i} s_j + C * sum_j K_ij s_j``.

    The level sums are kept in an integer accumulator and updated by adding or
    subtracting a row of ``K`` on each flip.
    """

    def __init__(self, qp: QuantizedProblem, state):
        self.qp = qp
        s8 = as_spins(state, qp.N)
        self.s = np.array(s8, dtype=np.float64)
        self.G = np.matmul(qp.K, s8.astype(qp.acc_dtype), dtype=qp.acc_dtype)
        self.total = int(np.sum(s8, dtype=np.int64))
        self.energy = quantized_energy(qp, s8)

    def field(self, i: int) -> float:
        qp = self.qp
        return qp.b[i] + qp.a0 * (self.total - self.s[i]) + qp.C * float(self.G[i])

    def flip(self, i: int) -> float:
        dE = 2.0 * self.s[i] * self.field(i)
        self.s[i] = -self.s[i]
        row = self.qp.K[i]
        if self.s[i] > 0:
            self.G += row
            self.G += row
            self.total += 2
        else:
            self.G -= row
            self.G -= row
            self.total -= 2
        self.energy += dE
        return dE

    def final_energy(self) -> float:
        return quantized_energy(self.qp, self.s)


def quantized_energy(qp: QuantizedProblem, state) -> float:
    """Discretized functional ``-1/2 sum_{i!=j} (a0 + C K_ij) s_i s_j - b.s``."""
    s = as_spins(state, qp.N)
    wide = s.astype(np.int64)
    ksum = int(wide @ np.matmul(qp.K, wide, dtype=np.int64))
    total = int(wide.sum())
    pair = qp.a0 * (total * total - qp.N) + qp.C * ksum
    return float(-0.5 * pair - np.dot(qp.b, s.astype(np.float64)))


def _descend(tracker, rng: np.random.Generator, max_sweeps: int, trace: bool, flip_log, norm):
    if max_sweeps < 1:
        raise ValueError(f"max_sweeps must be >= 1, got {max_sweeps}")
    n = tracker.s.shape[0]
    s = tracker.s
    field_ = tracker.field
    flip = tracker.flip
    rows = []
    total_flips = 0
    for sweep in range(1, max_sweeps + 1):
        flips = 0
        for i in rng.permutation(n):
            # sign(0) keeps the current spin
            if field_(i) * s[i] < 0.0:
                flip(i)
                flips += 1
                if flip_log is not None:
                    flip_log.append((int(i), tracker.energy))
        total_flips += flips
        if trace:
            rows.append((sweep, flips, tracker.energy))
        if flips == 0:
            E = tracker.final_energy()
            return MinimumRecord(as_spins(s.astype(np.int8)), E, total_flips, sweep, norm(E), rows)
    E = tracker.final_energy()
    partial = MinimumRecord(as_spins(s.astype(np.int8)), E, total_flips, max_sweeps, norm(E), rows)
    raise NonConvergenceError(f"no convergence within {max_sweeps} sweeps", partial)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def descend_exact(
    inst: ProblemInstance,
    start,
    seed=0,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    trace: bool = False,
    flip_log: list | None = None,
) -> MinimumRecord:
    """Asynchronous descent with ``s_i = sign(H_i)``.

    Each sweep visits the spins in a fresh random order; descent stops after a
    sweep with no flips. ``flip_log``, when given, receives ``(i, energy)``
    after every accepted flip.
    """
    tracker = ExactFields(inst, start)
    norm = _normalizer(inst.sigma_A, inst.N)
    return _descend(tracker, _rng(seed), max_sweeps, trace, flip_log, norm)


def descend_quantized(
    qp: QuantizedProblem,
    start,
    seed=0,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    trace: bool = False,
    flip_log: list | None = None,
    sigma_A: float = 1.0,
) -> MinimumRecord:
    """Asynchronous descent with the discretized rule ``s_i = sign(h_i)``.

    The recorded energy is the discretized functional; ``r`` is normalized by
    ``sigma_A``.
    """
    tracker = QuantizedFields(qp, start)
    norm = _normalizer(sigma_A, qp.N)
    return _descend(tracker, _rng(seed), max_sweeps, trace, flip_log, norm)


def _normalizer(sigma_A: float, n: int):
    if sigma_A > 0:
        return lambda E: depth(E, sigma_A, n)
    return lambda E: math.nan


def descend_hybrid(
    inst: ProblemInstance,
    qp: QuantizedProblem,
    start,
    seed=0,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> HybridResult:
    """Discretized descent to ``S*``, then exact descent from ``S*`` to ``S0``.

    ``delta_E = (E(S*) - E(S0)) / |E(S0)|`` uses exact energies for both states
    and ``d`` is the Hamming distance between them.
    """
    if qp.N != inst.N:
        raise ValueError(f"dimension mismatch: {qp.N} vs {inst.N}")
    rng = _rng(seed)
    star = descend_quantized(qp, start, rng, max_sweeps, sigma_A=inst.sigma_A)
    final = descend_exact(inst, star.state, rng, max_sweeps)
    E_star = energy(inst, star.state)
    E0 = final.energy
    delta = (E_star - E0) / abs(E0) if E0 != 0.0 else 0.0
    d = int(np.count_nonzero(star.state != final.state))
    return HybridResult(star.state, final.state, E_star, E0, delta, d, final.r)


def quantized_fields(qp: QuantizedProblem, state) -> np.ndarray:
    s8 = as_spins(state, qp.N)
    s = s8.astype(np.float64)
    ksum = np.matmul(qp.K, s8.astype(qp.acc_dtype), dtype=qp.acc_dtype)
    return qp.b + qp.a0 * (s.sum() - s) + qp.C * ksum


def measure_mismatch_at_state(inst: ProblemInstance, qp: QuantizedProblem, state) -> float:
    """Fraction of spins whose exact and discretized fields have opposite signs."""
    s = as_spins(state, inst.N)
    H = inst.B + inst.A @ s.astype(np.float64)
    h = quantized_fields(qp, s)
    return float(np.count_nonzero(H * h < 0.0)) / inst.N
