"""Seeded Monte Carlo estimators and the figure harness.

Every trial derives its own random streams from ``(seed, trial, purpose)``, so
instance ``t`` is the same across all ``m`` and all figures for a given seed,
and results do not depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Sequence

import numpy as np

from . import theory
from .dynamics import (
    DEFAULT_MAX_SWEEPS,
    NonConvergenceError,
    descend_exact,
    descend_hybrid,
    measure_mismatch_at_state,
)
from .problem import UNIFORM_SIGMA, ProblemInstance, generate_instance, random_state
from .quantizer import (
    QuantizedProblem,
    build_binarized_quantizer,
    build_uniform_quantizer,
    optimize_l0,
    quantize_matrix,
)

WORKERS_ENV = "HOPQUANT_WORKERS"
CHUNK = 256

# absolute tolerances for MC-vs-theory flags, per estimator
TOL_RANDOM = 0.012
TOL_MINIMUM = 0.012
TOL_DELTA_E = 0.03
TOL_DISTANCE = 0.03

_INSTANCE, _START, _DESCENT, _SAMPLES = 0, 1, 2, 3


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 500
    m_list: tuple[int, ...] = (1, 2, 4, 8, 16)
    A0_grid: tuple[float, ...] = tuple(np.linspace(0.0, 2.0, 9).round(6))
    beta_list: tuple[float, ...] = (0.0, 1.0, 2.0, 4.0)
    trials: int = 50
    samples_per_trial: int = 2000
    seed: int = 0
    baseline_binarized: bool = False
    dist: str = "uniform"
    max_sweeps: int = DEFAULT_MAX_SWEEPS

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if self.trials < 1 or self.samples_per_trial < 1:
            raise ValueError("trials and samples_per_trial must be >= 1")
        if not (self.m_list and self.A0_grid and self.beta_list):
            raise ValueError("grids must be non-empty")
        for name in ("m_list", "A0_grid", "beta_list"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


@dataclass(frozen=True)
class SeriesRow:
    x: float
    mc_mean: float
    mc_stderr: float
    theory: float
    n_samples: int
    series: str = ""
    tol: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        """MC agrees with theory within ``max(3 stderr, tol)``; rows without theory pass."""
        if math.isnan(self.theory):
            return True
        return abs(self.mc_mean - self.theory) <= max(3.0 * self.mc_stderr, self.tol)


Table = dict  # series name -> list[SeriesRow]


def _stream(cfg: ExperimentConfig, trial: int, purpose: int, *salt: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, trial, purpose, *salt])


def _summary(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn: Callable, items: Sequence) -> list:
    n = _workers()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _sigma(cfg: ExperimentConfig) -> float:
    return UNIFORM_SIGMA if cfg.dist == "uniform" else 1.0


def default_instance(cfg: ExperimentConfig, trial: int, A0: float = 0.0, beta: float = 0.0) -> ProblemInstance:
    """Trial instance; ``A0`` is in units of the ensemble deviation."""
    seed = np.random.SeedSequence([cfg.seed, trial, _INSTANCE])
    return generate_instance(cfg.N, cfg.dist, A0 * _sigma(cfg), beta, seed)


def make_quantized(inst: ProblemInstance, m: int, scheme: str = "zero-segment") -> QuantizedProblem:
    """Quantize with the zero-segment scheme or the ``l0 = 0`` sign baseline.

    Uniform instances use the equal-bin quantizer; other ensembles search
    ``l0``. The baseline step is the mean ``|A'|``; its scale does not affect
    the field signs once offsets are fitted.
    """
    if scheme == "binarized":
        aprime = inst.centered[np.triu_indices(inst.N, 1)]
        return quantize_matrix(inst, build_binarized_quantizer(float(np.mean(np.abs(aprime)))))
    if scheme != "zero-segment":
        raise ValueError(f"unknown scheme {scheme!r}")
    if inst.dist == "uniform":
        q = build_uniform_quantizer(m, half_width=math.sqrt(3.0) * inst.sigma_A)
    else:
        q = optimize_l0(inst, m)
    return quantize_matrix(inst, q)


def theory_moments(cfg: ExperimentConfig, m: int, scheme: str = "zero-segment"):
    """Ensemble moments of the quantizer the MC path uses for ``scheme``."""
    sigma = _sigma(cfg)
    if scheme == "binarized":
        C = math.sqrt(3.0) * sigma / 2 if cfg.dist == "uniform" else sigma * math.sqrt(2 / math.pi)
        q = build_binarized_quantizer(C)
    elif cfg.dist == "uniform":
        q = build_uniform_quantizer(m, half_width=math.sqrt(3.0) * sigma)
    else:
        q = theory.optimal_equal_width(m, cfg.dist, sigma)
    return theory.ensemble_moments(q, cfg.dist, sigma)


def predicted_random(cfg: ExperimentConfig, m: int, A0: float = 0.0, beta: float = 0.0,
                     scheme: str = "zero-segment") -> float:
    sigma = _sigma(cfg)
    mom = theory_moments(cfg, m, scheme)
    return theory.random_point_error(mom, cfg.N, A0 * sigma, sigma, beta * math.sqrt(cfg.N) * sigma)


# -- trial kernels (top-level so they pickle) ---------------------------------


@dataclass(frozen=True)
class _Job:
    cfg: ExperimentConfig
    m: int
    trial: int
    A0: float = 0.0
    beta: float = 0.0
    scheme: str = "zero-segment"


def _resolve(job: _Job, instance_factory, quantizer_factory):
    inst = (instance_factory or default_instance)(job.cfg, job.trial, job.A0, job.beta)
    qp = (quantizer_factory or make_quantized)(inst, job.m, job.scheme)
    return inst, qp


def _trial_random(job: _Job, instance_factory=None, quantizer_factory=None) -> float:
    inst, qp = _resolve(job, instance_factory, quantizer_factory)
    rng = _stream(job.cfg, job.trial, _SAMPLES, job.m)
    n = inst.N
    total = job.cfg.samples_per_trial
    bad = 0
    Kw = qp.K
    for start in range(0, total, CHUNK):
        k = min(CHUNK, total - start)
        S = np.where(rng.random((k, n)) < 0.5, -1.0, 1.0)
        idx = rng.integers(0, n, size=k)
        H = inst.B[idx] + np.einsum("ij,ij->i", inst.A[idx], S)
        ksum = np.einsum("ij,ij->i", Kw[idx].astype(np.float64), S)
        rest = S.sum(axis=1) - S[np.arange(k), idx]
        h = qp.b[idx] + qp.a0 * rest + qp.C * ksum
        bad += int(np.count_nonzero(H * h < 0.0))
    return bad / total


def _start(job: _Job) -> np.ndarray:
    return random_state(job.cfg.N, _stream(job.cfg, job.trial, _START))


def _trial_minimum(job: _Job, instance_factory=None, quantizer_factory=None) -> tuple[float, float]:
    inst, qp = _resolve(job, instance_factory, quantizer_factory)
    try:
        rec = descend_exact(inst, _start(job), _stream(job.cfg, job.trial, _DESCENT), job.cfg.max_sweeps)
    except NonConvergenceError as exc:
        raise NonConvergenceError(f"trial {job.trial}: {exc}", exc.record) from exc
    return measure_mismatch_at_state(inst, qp, rec.state), rec.r


def _trial_hybrid(job: _Job, instance_factory=None, quantizer_factory=None) -> tuple[float, float, float]:
    inst, qp = _resolve(job, instance_factory, quantizer_factory)
    # the descent stream is salted by m so schemes do not share update orders
    rng = _stream(job.cfg, job.trial, _DESCENT, job.m, 1 if job.scheme == "binarized" else 0)
    try:
        res = descend_hybrid(inst, qp, _start(job), rng, job.cfg.max_sweeps)
    except NonConvergenceError as exc:
        raise NonConvergenceError(f"trial {job.trial}: {exc}", exc.record) from exc
    return res.delta_E, res.d / inst.N, res.r


def _run(kernel, jobs, instance_factory, quantizer_factory) -> list:
    fn = partial(kernel, instance_factory=instance_factory, quantizer_factory=quantizer_factory)
    return _map(fn, jobs)


# -- estimators ------------------------------------------------------------


def estimate_P_random(
    cfg: ExperimentConfig,
    m: int,
    A0: float = 0.0,
    beta: float = 0.0,
    scheme: str = "zero-segment",
    instance_factory=None,
    quantizer_factory=None,
) -> SeriesRow:
    """Mismatch rate at random states; ``A0`` in deviation units, ``beta`` the field level.

    Each trial draws ``samples_per_trial`` independent (state, spin) pairs on one
    instance. The standard error is taken over trial means.
    """
    jobs = [_Job(cfg, m, t, A0, beta, scheme) for t in range(cfg.trials)]
    per_trial = _run(_trial_random, jobs, instance_factory, quantizer_factory)
    mean, se = _summary(per_trial)
    pred = predicted_random(cfg, m, A0, beta, scheme)
    return SeriesRow(A0, mean, se, pred, cfg.trials * cfg.samples_per_trial, tol=TOL_RANDOM)


def sample_minima(cfg: ExperimentConfig, m: int, instance_factory=None, quantizer_factory=None) -> np.ndarray:
    """Per-trial ``(P at S0, r of S0)`` for exact minima from random starts."""
    jobs = [_Job(cfg, m, t) for t in range(cfg.trials)]
    return np.array(_run(_trial_minimum, jobs, instance_factory, quantizer_factory))


def estimate_P_minimum(cfg: ExperimentConfig, m: int, instance_factory=None, quantizer_factory=None) -> SeriesRow:
    """Mismatch rate at exact minima (A0 = 0, B = 0); theory at the mean measured depth."""
    data = sample_minima(cfg, m, instance_factory, quantizer_factory)
    mean, se = _summary(data[:, 0])
    r_bar = float(data[:, 1].mean())
    return SeriesRow(
        float(m), mean, se, theory.error_at_minimum(m, r_bar), cfg.trials * cfg.N,
        tol=TOL_MINIMUM, extra={"r_mean": r_bar, "r_stderr": _summary(data[:, 1])[1]},
    )


def sample_hybrid(
    cfg: ExperimentConfig, m: int, scheme: str = "zero-segment", instance_factory=None, quantizer_factory=None
) -> np.ndarray:
    """Per-trial ``(delta_E, d/N, r of S0)`` from hybrid descents."""
    jobs = [_Job(cfg, m, t, scheme=scheme) for t in range(cfg.trials)]
    return np.array(_run(_trial_hybrid, jobs, instance_factory, quantizer_factory))


# -- figures ----------------------------------------------------------------


def run_fig1(cfg: ExperimentConfig) -> Table:
    """Random-point error over the ``A0`` grid for each field level (first ``m`` in ``m_list``)."""
    m = cfg.m_list[0]
    table: Table = {}
    for beta in cfg.beta_list:
        name = f"beta={beta:g}"
        table[name] = [replace_series(estimate_P_random(cfg, m, x, beta), name) for x in cfg.A0_grid]
    if cfg.baseline_binarized:
        table["binarized"] = [
            replace_series(estimate_P_random(cfg, 1, x, 0.0, scheme="binarized"), "binarized")
            for x in cfg.A0_grid
        ]
    return table


def run_fig2(cfg: ExperimentConfig) -> Table:
    rand, mini = [], []
    for m in cfg.m_list:
        row = estimate_P_random(cfg, m)
        rand.append(replace(row, x=float(m), series="random"))
        mini.append(replace_series(estimate_P_minimum(cfg, m), "minimum"))
    return {"random": rand, "minimum": mini}


def _hybrid_rows(cfg: ExperimentConfig, m: int, scheme: str = "zero-segment"):
    data = sample_hybrid(cfg, m, scheme)
    return data, float(data[:, 2].mean())


def run_fig3(cfg: ExperimentConfig) -> Table:
    """Relative energy gap of hybrid descents; theory ``2 P`` at the minimum."""
    rows = []
    for m in cfg.m_list:
        data, r_bar = _hybrid_rows(cfg, m)
        mean, se = _summary(data[:, 0])
        pred = theory.predicted_delta_E(theory.error_at_minimum(m, r_bar))
        rows.append(SeriesRow(float(m), mean, se, pred, cfg.trials, "delta_E", TOL_DELTA_E, {"r_mean": r_bar}))
    return {"delta_E": rows}


def run_fig4(cfg: ExperimentConfig) -> Table:
    """Normalized Hamming distance ``d/N`` of hybrid descents.

    The overlay is ``d = N P`` with the random-point error of each scheme.
    """
    table: Table = {"d_over_N": []}
    for m in cfg.m_list:
        data, r_bar = _hybrid_rows(cfg, m)
        mean, se = _summary(data[:, 1])
        P = predicted_random(cfg, m)
        table["d_over_N"].append(
            SeriesRow(float(m), mean, se, theory.predicted_distance(cfg.N, P) / cfg.N, cfg.trials, "d_over_N",
                      TOL_DISTANCE, {"r_mean": r_bar})
        )
    if cfg.baseline_binarized:
        data, r_bar = _hybrid_rows(cfg, 1, "binarized")
        mean, se = _summary(data[:, 1])
        P = predicted_random(cfg, 1, scheme="binarized")
        table["binarized"] = [
            SeriesRow(1.0, mean, se, P, cfg.trials, "binarized", TOL_DISTANCE,
                      {"r_mean": r_bar, "delta_E": float(data[:, 0].mean())})
        ]
    return table


FIGURES = {"fig1": run_fig1, "fig2": run_fig2, "fig3": run_fig3, "fig4": run_fig4}


def replace_series(row: SeriesRow, name: str) -> SeriesRow:
    return replace(row, series=name)


def table_passed(table: Table) -> bool:
    return all(r.passed for rows in table.values() for r in rows)


CSV_HEADER = ("series", "x", "mc_mean", "mc_stderr", "theory", "n")


def table_to_csv(table: Table) -> str:
    """Render a figure table; floats use ``repr`` so output is locale-free and exact."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for name, rows in table.items():
        for r in rows:
            w.writerow([name, repr(float(r.x)), repr(r.mc_mean), repr(r.mc_stderr), repr(r.theory), r.n_samples])
    return buf.getvalue()
