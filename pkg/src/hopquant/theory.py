"""Analytic predictions for the sign-mismatch error and derived quantities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr

from .quantizer import DegenerateQuantizerError, QuantMoments, Quantizer, equal_width_quantizer

_SQRT2PI = math.sqrt(2.0 * math.pi)
_TAIL = 8.0
_QUAD_TOL = 1e-11


def normal_cdf(z):
    """Standard normal CDF (``0.5 * erfc(-z/sqrt(2))``); scalar or array."""
    out = ndtr(z)
    return float(out) if np.ndim(out) == 0 else out


def _normal_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / _SQRT2PI


@dataclass(frozen=True)
class FieldStats:
    sigma_H: float
    sigma_h: float
    rho: float
    mean_H: float = 0.0
    mean_h: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sigma_H > 0 and self.sigma_h > 0):
            raise ValueError("field deviations must be positive")
        if not abs(self.rho) <= 1.0 + 1e-12:
            raise ValueError(f"|rho| must be <= 1, got {self.rho}")


def field_stats(
    N: int,
    A0: float,
    sigma_A: float,
    a0: float,
    sigma_a2: float,
    cross: float,
    B_i: float = 0.0,
    b_i: float = 0.0,
) -> FieldStats:
    """Joint Gaussian statistics of the exact and discretized fields at a random state."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not sigma_A > 0:
        raise ValueError(f"sigma_A must be positive, got {sigma_A}")
    sH = math.sqrt(N * (A0 * A0 + sigma_A * sigma_A))
    h2 = N * (a0 * a0 + sigma_a2)
    if not h2 > 0:
        raise DegenerateQuantizerError("discretized field has zero variance")
    sh = math.sqrt(h2)
    rho = N * (a0 * A0 + cross) / (sH * sh)
    return FieldStats(sH, sh, max(-1.0, min(1.0, rho)), B_i, b_i)


def _orthant(alpha: float, beta: float, rho: float) -> float:
    """``Pr{X < alpha, Y < beta}`` for standard normals with correlation ``rho``.

    Integrates the joint density over ``X`` with the inner integral in ``Y``
    done in closed form; the outer range is cut at 8 deviations.
    """
    lo = -_TAIL
    hi = min(alpha, _TAIL)
    if hi <= lo:
        return 0.0
    k = math.sqrt(1.0 - rho * rho)

    def f(x: float) -> float:
        return _normal_pdf(x) * float(ndtr((beta - rho * x) / k))

    # the inner CDF steps near x = beta/rho when |rho| -> 1
    pts = [p for p in (0.0, beta / rho if rho else None) if p is not None and lo < p < hi]
    val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=_QUAD_TOL, epsrel=1e-10, limit=200)
    return val


def _orthant_degenerate(alpha: float, beta: float, rho: float) -> float:
    if rho > 0:
        return float(ndtr(min(alpha, beta)))
    return max(0.0, float(ndtr(alpha)) - float(ndtr(-beta)))


def error_random_point(stats: FieldStats, singular_tol: float = 1e-12) -> float:
    """``Pr{H h < 0}`` for jointly normal fields.

    One minus the mass of the two same-sign quadrants. Near ``|rho| = 1`` the
    degenerate limit is used instead of the quadrature.
    """
    if not isinstance(stats, FieldStats):
        raise ValueError("stats must be a FieldStats")
    al = stats.mean_H / stats.sigma_H
    be = stats.mean_h / stats.sigma_h
    rho = stats.rho
    quad = _orthant_degenerate if abs(rho) >= 1.0 - singular_tol else _orthant
    # Pr{H > 0, h > 0} = Pr{X < al, Y < be} by reflection of the standardized pair
    same = quad(al, be, rho) + quad(-al, -be, rho)
    return min(1.0, max(0.0, 1.0 - same))


def error_worst_case(rho_min: float) -> float:
    """Closed form at zero means: ``1/2 - arcsin(rho)/pi``."""
    if not abs(rho_min) <= 1.0:
        raise ValueError(f"|rho_min| must be <= 1, got {rho_min}")
    return 0.5 - math.asin(rho_min) / math.pi


@dataclass(frozen=True)
class UniformParams:
    C: float
    sigma_a2: float
    cross: float
    a0_factor: float
    rho: float


def uniform_params(m: int, A0: float = 0.0, sigma_A: float = 1.0 / math.sqrt(3.0)) -> UniformParams:
    """Equal-bin quantization of a uniform ensemble with deviation ``sigma_A``."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    L = 2 * m + 1
    C = 2.0 * math.sqrt(3.0) * sigma_A / L
    s2 = sigma_A * sigma_A * (1.0 - 1.0 / L ** 2)
    rho = math.sqrt(1.0 - sigma_A ** 2 / (L ** 2 * (A0 * A0 + sigma_A ** 2)))
    return UniformParams(C, s2, s2, 1.0, rho)


def rho_min_uniform(m: int) -> float:
    return math.sqrt(1.0 - 1.0 / (2 * m + 1) ** 2)


def asymptotic_random(m: int) -> tuple[float, float]:
    """``(rho_min, P_max)`` with ``P_max = 1/(pi (2m+1))``.

    ``rho_min`` is the exact equal-bin value; it is what the ``P_max``
    approximation is consistent with.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return rho_min_uniform(m), 1.0 / (math.pi * (2 * m + 1))


def error_at_minimum(m: int, r: float) -> float:
    """Mismatch probability at a minimum of normalized depth ``r``."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    g = 2.0 * math.sqrt(m * (m + 1))

    def f(x: float) -> float:
        return float(ndtr(-g * x)) * math.exp(-0.5 * (x - r) ** 2)

    val, _ = integrate.quad(f, 0.0, r + 10.0, epsabs=1e-12, epsrel=1e-10, limit=200)
    return min(1.0, max(0.0, val / (_SQRT2PI * float(ndtr(r)))))


def asymptotic_minimum(m: int) -> float:
    """Large-``m`` estimate; about 30% low near ``m = 1``."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return 1.0 / (math.pi ** 2 * math.sqrt(math.pi + 8.0 * m * (m + 1)))


def predicted_delta_E(P: float) -> float:
    if not 0.0 <= P <= 1.0:
        raise ValueError(f"P must be a probability, got {P}")
    return 2.0 * P


def predicted_distance(N: int, P: float) -> float:
    if not 0.0 <= P <= 1.0:
        raise ValueError(f"P must be a probability, got {P}")
    return N * P


def ensemble_moments(q: Quantizer, dist: str = "uniform", sigma_A: float | None = None) -> QuantMoments:
    """Exact ``<a^2>``, ``<a A'>`` and ``rho_min`` of a quantizer under an ensemble.

    ``uniform`` is supported on ``[-sqrt(3) sigma, sqrt(3) sigma]``; ``gaussian``
    is centered normal. Bin probabilities and first moments are integrated
    in closed form.
    """
    if dist == "uniform":
        sigma = 1.0 / math.sqrt(3.0) if sigma_A is None else sigma_A
        half = math.sqrt(3.0) * sigma

        def mass(lo, hi):
            lo, hi = max(lo, -half), min(hi, half)
            return max(0.0, hi - lo) / (2 * half)

        def first(lo, hi):
            lo, hi = max(lo, -half), min(hi, half)
            return (hi * hi - lo * lo) / (4 * half) if hi > lo else 0.0

    elif dist == "gaussian":
        sigma = 1.0 if sigma_A is None else sigma_A

        def mass(lo, hi):
            return float(ndtr(hi / sigma) - ndtr(lo / sigma))

        def first(lo, hi):
            pdf = lambda z: math.exp(-0.5 * (z / sigma) ** 2) / _SQRT2PI if math.isfinite(z) else 0.0
            return sigma * (pdf(lo) - pdf(hi))

    else:
        raise ValueError(f"unknown distribution {dist!r}")
    bounds = [-math.inf, *q.edges, math.inf]
    s2 = cross = 0.0
    for t, k in enumerate(range(-q.m, q.m + 1)):
        lo, hi = bounds[t], bounds[t + 1]
        a = k * q.C
        s2 += a * a * mass(lo, hi)
        cross += a * first(lo, hi)
    if s2 == 0.0:
        return QuantMoments(0.0, 0.0, 0.0, sigma * sigma, degenerate=True)
    return QuantMoments(s2, cross, cross / (math.sqrt(s2) * sigma), sigma * sigma)


def optimal_equal_width(m: int, dist: str = "gaussian", sigma_A: float = 1.0) -> Quantizer:
    """Equal-width quantizer whose ``l0`` maximizes the ensemble ``rho_min``."""
    top = (8.0 if dist == "gaussian" else 2.0 * math.sqrt(3.0)) * sigma_A / (2 * m + 1)
    res = optimize.minimize_scalar(
        lambda l0: -ensemble_moments(equal_width_quantizer(m, l0), dist, sigma_A).rho_min,
        bounds=(1e-9, top), method="bounded", options={"xatol": 1e-10},
    )
    return equal_width_quantizer(m, float(res.x))


def optimal_rho(A0: float, sigma_A: float, moments: QuantMoments) -> float:
    """Field correlation under the optimal offsets."""
    c2 = moments.cross ** 2 / moments.sigma_a2
    return math.sqrt((A0 * A0 + c2) / (A0 * A0 + sigma_A * sigma_A))


def random_point_error(
    moments: QuantMoments, N: int, A0: float, sigma_A: float, B_i: float = 0.0
) -> float:
    """Predicted random-point error with ensemble moments and optimal offsets."""
    factor = moments.sigma_a2 / moments.cross
    stats = field_stats(N, A0, sigma_A, A0 * factor, moments.sigma_a2, moments.cross, B_i, B_i * factor)
    return error_random_point(stats)
