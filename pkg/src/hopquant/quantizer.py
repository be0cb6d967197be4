"""Discretization of the centered coupling matrix into ``2m+1`` integer levels.

A quantizer partitions the real line with ``2m`` thresholds into ``2m+1`` bins,
left-open and right-closed; bin ``k`` (``k = -m..m``) is represented by the
level value ``k*C``. Deviations beyond the outer thresholds clamp to ``+-m``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .problem import ProblemInstance

MAX_LEVELS = 127
_MAGIC = b"HQP1"
_HEADER = struct.Struct("<4sIHHdd")
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DegenerateQuantizerError(ValueError):
    """The quantized couplings carry no signal (zero variance or zero correlation)."""


@dataclass(frozen=True)
class Quantizer:
    m: int
    C: float
    edges: tuple[float, ...]
    l0: float

    def __post_init__(self) -> None:
        if not 1 <= self.m <= MAX_LEVELS:
            raise ValueError(f"m must be in 1..{MAX_LEVELS}, got {self.m}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        e = np.asarray(self.edges, dtype=np.float64)
        if e.shape != (2 * self.m,):
            raise ValueError(f"need {2 * self.m} edges, got {e.size}")
        # a zero-length central bin (l0 = 0) is the only allowed tie
        d = np.diff(e)
        if np.any(d < 0) or np.any((d == 0) & (np.arange(d.size) != self.m - 1)):
            raise ValueError("edges must be strictly increasing")
        if not np.allclose(e, -e[::-1], rtol=0, atol=1e-12):
            raise ValueError("edges must be symmetric about zero")
        object.__setattr__(self, "edges", tuple(float(x) for x in e))

    @property
    def levels(self) -> np.ndarray:
        return np.arange(-self.m, self.m + 1) * self.C

    def bin_index(self, aprime) -> np.ndarray:
        """Level index ``k`` for each deviation (vectorized)."""
        t = np.searchsorted(np.asarray(self.edges), aprime, side="left")
        return (np.asarray(t) - self.m).astype(np.int8)


def equal_width_quantizer(m: int, l0: float, C: float | None = None) -> Quantizer:
    """All bins have width ``l0``: thresholds at ``+-l0/2, +-3*l0/2, ...``."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not l0 >= 0:
        raise ValueError(f"l0 must be >= 0, got {l0}")
    t = np.arange(-m + 1, m + 1)
    edges = (2 * t - 1) * l0 / 2.0
    return Quantizer(m=m, C=float(C if C is not None else l0), edges=tuple(edges), l0=float(l0))


def build_uniform_quantizer(m: int, half_width: float = 1.0) -> Quantizer:
    """Equal partition of ``[-half_width, half_width]`` into ``2m+1`` bins.

    For the unit interval the step is ``C = 2/(2m+1)`` and each bin (including
    the zero bin) has length ``C``; bin means are exactly ``k*C``.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    C = 2.0 * half_width / (2 * m + 1)
    return equal_width_quantizer(m, C, C)


def build_binarized_quantizer(C: float = 0.5) -> Quantizer:
    """Two-level sign quantizer (empty zero bin), ``a = C * sign(A')``."""
    return Quantizer(m=1, C=C, edges=(0.0, 0.0), l0=0.0)


def quantize_value(q: Quantizer, aprime: float) -> int:
    return int(q.bin_index(float(aprime)))


@dataclass(frozen=True)
class QuantMoments:
    sigma_a2: float
    cross: float
    rho_min: float
    sigma_A2: float = float("nan")
    degenerate: bool = False


def _off_diag(inst: ProblemInstance) -> np.ndarray:
    return inst.centered[np.triu_indices(inst.N, 1)]


def _moments(aprime: np.ndarray, k: np.ndarray, C: float) -> QuantMoments:
    a = k.astype(np.float64) * C
    sigma_a2 = float(np.mean(a * a))
    cross = float(np.mean(a * aprime))
    sigma_A2 = float(np.mean(aprime * aprime))
    if sigma_a2 == 0.0 or sigma_A2 == 0.0:
        return QuantMoments(sigma_a2, cross, 0.0, sigma_A2, degenerate=True)
    rho = cross / math.sqrt(sigma_a2 * sigma_A2)
    return QuantMoments(sigma_a2, cross, min(1.0, max(-1.0, rho)), sigma_A2)


def sample_moments(inst: ProblemInstance, q: Quantizer) -> QuantMoments:
    """Sample ``<a^2>``, ``<a A'>`` and their correlation over pairs ``i < j``.

    The correlation is normalized by the sample RMS of ``A'`` so that it obeys
    Cauchy-Schwarz on every instance.
    """
    aprime = _off_diag(inst)
    return _moments(aprime, q.bin_index(aprime), q.C)


def optimal_offsets(A0: float, B, moments: QuantMoments) -> tuple[float, np.ndarray]:
    """Offset ``a0`` and field ``b`` minimizing the sign-mismatch error.

    Both are the exact values scaled by ``sigma_a^2 / <a A'>``.
    """
    if moments.degenerate or moments.cross == 0.0:
        raise DegenerateQuantizerError("quantized couplings are uncorrelated with A'")
    factor = moments.sigma_a2 / moments.cross
    return A0 * factor, np.asarray(B, dtype=np.float64) * factor


def _accumulator_dtype(n: int, m: int) -> np.dtype:
    bound = n * m
    for dt in (np.int32, np.int64):
        if bound <= np.iinfo(dt).max:
            return np.dtype(dt)
    raise OverflowError(f"level sums up to {bound} overflow int64")


@dataclass(frozen=True)
class QuantizedProblem:
    """Integer level matrix ``K`` with coupling ``a0 + C*K`` and field ``b``."""

    K: np.ndarray
    C: float
    a0: float
    b: np.ndarray
    m: int
    N: int = field(init=False)
    acc_dtype: np.dtype = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 1 <= self.m <= MAX_LEVELS:
            raise ValueError(f"m must be in 1..{MAX_LEVELS}, got {self.m}")
        K = np.asarray(self.K)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"K must be square, got shape {K.shape}")
        if not np.issubdtype(K.dtype, np.integer):
            raise ValueError("K must hold integers")
        if np.any(np.abs(K.astype(np.int64)) > self.m):
            raise ValueError(f"levels exceed +-{self.m}")
        if not np.array_equal(K, K.T) or np.any(np.diag(K) != 0):
            raise ValueError("K must be symmetric with zero diagonal")
        n = K.shape[0]
        b = np.array(self.b, dtype=np.float64)
        if b.shape != (n,):
            raise ValueError(f"b must have shape ({n},)")
        K = K.astype(np.int8)
        K.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", float(self.C))
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "N", n)
        object.__setattr__(self, "acc_dtype", _accumulator_dtype(n, self.m))

    def couplings(self) -> np.ndarray:
        """Dense real coupling matrix ``a0 + C*K`` with zero diagonal."""
        out = self.a0 + self.C * self.K.astype(np.float64)
        np.fill_diagonal(out, 0.0)
        return out


def quantize_matrix(inst: ProblemInstance, q: Quantizer) -> QuantizedProblem:
    """Quantize the upper triangle of ``A - A0``, mirror it, and fit offsets."""
    if not np.array_equal(inst.A, inst.A.T):
        raise ValueError("instance matrix is not symmetric")
    n = inst.N
    iu = np.triu_indices(n, 1)
    aprime = inst.A[iu] - inst.A0
    k = q.bin_index(aprime)
    K = np.zeros((n, n), dtype=np.int8)
    K[iu] = k
    K = K + K.T
    a0, b = optimal_offsets(inst.A0, inst.B, _moments(aprime, k, q.C))
    return QuantizedProblem(K, q.C, a0, b, q.m)


def _first_bin_mean(aprime: np.ndarray, q: Quantizer) -> float:
    lo = q.edges[q.m]
    hi = q.edges[q.m + 1] if q.m > 1 else math.inf
    sel = aprime[(aprime > lo) & (aprime <= hi)]
    return float(sel.mean()) if sel.size else q.l0


def optimize_l0(inst: ProblemInstance, m: int, rtol: float = 1e-4) -> Quantizer:
    """Choose the zero-bin length that maximizes the sample correlation.

    Quantizers are equal-width (every bin has length ``l0``) and the step ``C``
    is the mean deviation in the first positive bin; the correlation itself does
    not depend on ``C``. Golden-section search over ``(0, 4*max|A'|/(2m+1)]``
    returns the best quantizer probed.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    aprime = _off_diag(inst)
    if not np.all(np.isfinite(aprime)):
        raise ValueError("matrix contains non-finite entries")
    top = 4.0 * float(np.max(np.abs(aprime))) / (2 * m + 1)
    if top == 0.0:
        raise DegenerateQuantizerError("all deviations are zero")

    cache: dict[float, float] = {}

    def score(l0: float) -> float:
        if l0 not in cache:
            q = equal_width_quantizer(m, l0)
            cache[l0] = _moments(aprime, q.bin_index(aprime), 1.0).rho_min
        return cache[l0]

    lo, hi = 0.0, top
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    while hi - lo > rtol * max(x1, x2):
        if score(x1) >= score(x2):
            hi, x2 = x2, x1
            x1 = hi - _GOLDEN * (hi - lo)
        else:
            lo, x1 = x1, x2
            x2 = lo + _GOLDEN * (hi - lo)
    best = max(cache, key=lambda l: (cache[l], -l))
    q = equal_width_quantizer(m, best)
    return equal_width_quantizer(m, best, _first_bin_mean(aprime, q))


# -- serialization --------------------------------------------------------
#
# Binary layout, little-endian:
#   magic  4s   b"HQP1"
#   N      u32
#   m      u16
#   pad    u16  (zero)
#   C      f64
#   a0     f64
#   K      N*N i8, row-major
#   b      N   f64


def save_quantized(qp: QuantizedProblem, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, qp.N, qp.m, 0, qp.C, qp.a0))
        fh.write(np.ascontiguousarray(qp.K, dtype="<i1").tobytes())
        fh.write(np.ascontiguousarray(qp.b, dtype="<f8").tobytes())


def load_quantized(path: str | Path) -> QuantizedProblem:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n, m, _, C, a0 = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + n * n + 8 * n
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(data)}")
    off = _HEADER.size
    K = np.frombuffer(data, dtype="<i1", count=n * n, offset=off).reshape(n, n)
    b = np.frombuffer(data, dtype="<f8", count=n, offset=off + n * n)
    return QuantizedProblem(K.copy(), C, a0, b.copy(), m)


def dump_quantized_csv(qp: QuantizedProblem, path: str | Path) -> None:
    """Human-readable dump: header row, then ``N`` rows of levels, then ``b``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", qp.N, "m", qp.m, "C", repr(qp.C), "a0", repr(qp.a0)])
        for row in qp.K:
            w.writerow([int(v) for v in row])
        w.writerow([repr(float(v)) for v in qp.b])
