from __future__ import annotations

import numpy as np
import pytest

from hopquant import dynamics
from hopquant.problem import ProblemInstance
from hopquant.quantizer import QuantizedProblem

ACCEPTANCE_LINES: list[str] = []
LYAPUNOV = {"descents": 0, "steps": 0}


@pytest.fixture(autouse=True)
def _lyapunov_guard(monkeypatch):
    """Record every flip of every descent in the run and check the functional drops."""
    inner = dynamics._descend

    def checked(tracker, rng, max_sweeps, trace, flip_log, norm):
        log = [] if flip_log is None else flip_log
        start = tracker.energy
        try:
            return inner(tracker, rng, max_sweeps, trace, log, norm)
        finally:
            energies = np.array([start] + [e for _, e in log])
            assert np.all(np.diff(energies) < 0), "functional increased along a descent"
            LYAPUNOV["descents"] += 1
            LYAPUNOV["steps"] += len(log)

    monkeypatch.setattr(dynamics, "_descend", checked)


def pytest_terminal_summary(terminalreporter):
    if LYAPUNOV["descents"]:
        terminalreporter.write_line(
            f"Lyapunov check: {LYAPUNOV['steps']} flips over {LYAPUNOV['descents']} descents, all strictly decreasing"
        )
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def lattice_pair(n: int, seed: int, step: float = 0.25, m: int = 4, beta: float = 0.0):
    """Instance whose couplings are exact multiples of ``step`` and its exact level copy."""
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    K = np.zeros((n, n), dtype=np.int64)
    K[iu] = rng.integers(-m, m + 1, size=iu[0].size)
    K = K + K.T
    B = np.full(n, beta * step)
    inst = ProblemInstance(K * step, B, A0=0.0, sigma_A=float(np.std(K[iu] * step)))
    return inst, QuantizedProblem(K, step, 0.0, B, m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
