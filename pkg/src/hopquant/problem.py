"""Problem instances for binary quadratic minimization.

The functional is ``E(s) = -1/2 * s.A.s - B.s`` over spins ``s_i = +-1`` with a
symmetric, zero-diagonal coupling matrix ``A``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

UNIFORM_SIGMA = 1.0 / math.sqrt(3.0)
SYMMETRY_TOL = 1e-9

BMode = Union[float, Sequence[float], np.ndarray]


class MatrixParseError(ValueError):
    """Raised when a matrix file cannot be parsed; carries the cell position."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProblemInstance:
    """Coupling matrix ``A``, external field ``B`` and ensemble metadata.

    ``A0`` and ``sigma_A`` describe the ensemble the off-diagonal entries were
    drawn from; they are not re-estimated from the sample.
    """

    A: np.ndarray
    B: np.ndarray
    A0: float = 0.0
    sigma_A: float = UNIFORM_SIGMA
    dist: str = "custom"
    N: int = field(init=False)

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if n < 2:
            raise ValueError(f"N must be >= 2, got {n}")
        if B.shape != (n,):
            raise ValueError(f"B must have shape ({n},), got {B.shape}")
        if not np.array_equal(A, A.T):
            raise ValueError("A must be exactly symmetric")
        if np.any(np.diag(A) != 0.0):
            raise ValueError("A must have a zero diagonal")
        if not (self.sigma_A >= 0.0):
            raise ValueError(f"sigma_A must be >= 0, got {self.sigma_A}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "A0", float(self.A0))
        object.__setattr__(self, "sigma_A", float(self.sigma_A))
        object.__setattr__(self, "N", n)

    @property
    def centered(self) -> np.ndarray:
        """Off-diagonal deviations ``A - A0`` (diagonal left at zero)."""
        out = self.A - self.A0
        np.fill_diagonal(out, 0.0)
        return out


def as_spins(state, n: int | None = None) -> np.ndarray:
    """Validate a spin configuration and return it as a read-only int8 array."""
    s = np.asarray(state)
    if s.ndim != 1:
        raise ValueError(f"spin state must be 1-D, got shape {s.shape}")
    if n is not None and s.shape[0] != n:
        raise ValueError(f"spin state has length {s.shape[0]}, expected {n}")
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("spin entries must be exactly -1 or +1")
    return _frozen(s.astype(np.int8))


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random spin configuration."""
    return as_spins(np.where(rng.random(n) < 0.5, -1, 1))


def energy(inst: ProblemInstance, state) -> float:
    """``E = -1/2 sum_ij s_i A_ij s_j - sum_i s_i B_i``."""
    s = as_spins(state, inst.N).astype(np.float64)
    return float(-0.5 * np.dot(s, inst.A @ s) - np.dot(s, inst.B))


def local_field_exact(inst: ProblemInstance, state, i: int) -> float:
    """Local field ``H_i = B_i + sum_{j != i} A_ij s_j``, equal to ``-dE/ds_i``."""
    s = as_spins(state, inst.N).astype(np.float64)
    if not 0 <= i < inst.N:
        raise ValueError(f"index {i} out of range for N={inst.N}")
    return float(inst.B[i] + np.dot(inst.A[i], s))


def local_fields_exact(inst: ProblemInstance, state) -> np.ndarray:
    """All local fields at once."""
    s = as_spins(state, inst.N).astype(np.float64)
    return inst.B + inst.A @ s


def _field_vector(n: int, B_mode: BMode, sigma_A: float) -> np.ndarray:
    if np.ndim(B_mode) == 0:
        return np.full(n, float(B_mode) * math.sqrt(n) * sigma_A)
    B = np.asarray(B_mode, dtype=np.float64)
    if B.shape != (n,):
        raise ValueError(f"explicit B must have length {n}, got shape {B.shape}")
    return B


def generate_instance(
    N: int,
    dist: str = "uniform",
    A0: float = 0.0,
    B_mode: BMode = 0.0,
    seed: int | Sequence[int] = 0,
) -> ProblemInstance:
    """Draw a random symmetric instance.

    Upper-triangle deviations are i.i.d. uniform on [-1, 1] (``sigma_A = 1/sqrt(3)``)
    or standard normal (``sigma_A = 1``), then shifted by ``A0``. A scalar
    ``B_mode`` is a field level ``beta`` giving ``B_i = beta * sqrt(N) * sigma_A``;
    otherwise it is taken as the explicit field vector.
    """
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(N, 1)
    if dist == "uniform":
        sigma = UNIFORM_SIGMA
        vals = rng.uniform(-1.0, 1.0, size=iu[0].size)
    elif dist == "gaussian":
        sigma = 1.0
        vals = rng.standard_normal(size=iu[0].size)
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    A = np.zeros((N, N))
    A[iu] = vals + A0
    A = A + A.T
    return ProblemInstance(A, _field_vector(N, B_mode, sigma), A0=A0, sigma_A=sigma, dist=dist)


def instance_from_matrix(A, B=None, tol: float = SYMMETRY_TOL) -> ProblemInstance:
    """Build an instance from a user matrix, estimating ``A0`` and ``sigma_A``.

    Symmetry is checked to ``tol``; the matrix is then symmetrized exactly and
    its diagonal cleared.
    """
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    bad = np.argwhere(np.abs(A - A.T) > tol)
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise MatrixParseError(
            f"matrix not symmetric at row {i}, column {j}: {A[i, j]!r} vs {A[j, i]!r}", i, j
        )
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 0.0)
    n = A.shape[0]
    off = A[np.triu_indices(n, 1)]
    A0 = float(off.mean())
    sigma = float(off.std())
    if B is None:
        B = np.zeros(n)
    return ProblemInstance(A, np.asarray(B, dtype=np.float64), A0=A0, sigma_A=sigma)


def read_matrix_csv(path: str | Path) -> np.ndarray:
    """Read a square real matrix from CSV, reporting the offending cell on errors."""
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for r, line in enumerate(csv.reader(fh)):
            if not line or all(not c.strip() for c in line):
                continue
            vals = []
            for c, cell in enumerate(line):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise MatrixParseError(
                        f"{path}: cannot parse {cell!r} at row {r}, column {c}", r, c
                    ) from None
            if rows and len(vals) != len(rows[0]):
                raise MatrixParseError(
                    f"{path}: row {r} has {len(vals)} columns, expected {len(rows[0])}", r
                )
            rows.append(vals)
    if not rows:
        raise MatrixParseError(f"{path}: empty matrix file")
    arr = np.array(rows)
    if arr.shape[0] != arr.shape[1]:
        raise MatrixParseError(f"{path}: matrix is {arr.shape[0]}x{arr.shape[1]}, not square")
    return arr


def read_vector_csv(path: str | Path) -> np.ndarray:
    """Read a one-column CSV into a vector."""
    vals = []
    with open(path, newline="") as fh:
        for r, line in enumerate(csv.reader(fh)):
            if not line:
                continue
            if len(line) != 1:
                raise MatrixParseError(f"{path}: row {r} has {len(line)} columns, expected 1", r)
            try:
                vals.append(float(line[0]))
            except ValueError:
                raise MatrixParseError(f"{path}: cannot parse {line[0]!r} at row {r}", r, 0) from None
    return np.array(vals, dtype=np.float64)


def write_matrix_csv(path: str | Path, A: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(A):
            w.writerow([repr(float(v)) for v in row])


def write_vector_csv(path: str | Path, v: np.ndarray) -> None:
    write_matrix_csv(path, np.asarray(v, dtype=np.float64).reshape(-1, 1))


def load_instance(matrix_path: str | Path, field_path: str | Path | None = None) -> ProblemInstance:
    A = read_matrix_csv(matrix_path)
    B = read_vector_csv(field_path) if field_path is not None else None
    return instance_from_matrix(A, B)


def save_instance(inst: ProblemInstance, matrix_path: str | Path, field_path: str | Path | None = None) -> None:
    write_matrix_csv(matrix_path, inst.A)
    if field_path is not None:
        write_vector_csv(field_path, inst.B)
