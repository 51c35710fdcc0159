"""
Tail probabilities of Q = sum_i w_i u_i^2 with u_i iid N(0, 1) and w_i > 0.

tail_imhof inverts the characteristic function numerically:

    P[Q > x] = 1/2 + 1/pi * int_0^inf sin(theta(u)) / (u rho(u)) du
    theta(u) = 1/2 sum arctan(w_i u) - x u / 2
    rho(u)   = prod (1 + w_i^2 u^2)^(1/4)

The integral is split at a point a. [0, a] is integrated directly; when
the envelope 1/(u rho(u)) is still above the cut-off at a, the tail
[a, inf) is integrated with Fourier weights after expanding
sin(phi - x u / 2) = sin(phi) cos(x u / 2) - cos(phi) sin(x u / 2).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy import integrate, optimize, stats

from .utils.errors import IntegrationError, RegimeError

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-12
ENVELOPE_CUTOFF = 1e-10
QUAD_EPSABS = 1e-10
QUAD_LIMIT = 2000
# error bound above which a quadrature warning becomes fatal
FAIL_TOLERANCE = 1e-6
# half-periods of cos(x u / 2) integrated directly before switching to the Fourier tail
DIRECT_OSCILLATIONS = 400
MC_CHUNK = 20000
MIN_MC_SAMPLES = 1000


@dataclass(frozen=True, eq=False)
class QuadFormDist:
    """Positive weights of a quadratic form in independent standard normals."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise RegimeError("Quadratic form needs at least one finite weight")
        if np.any(w < 0):
            raise RegimeError(f"Weights must be non-negative, got min {w.min():.3e}")
        top = w.max()
        if top <= 0:
            raise RegimeError("Quadratic form has no positive weight")
        w = w[w > WEIGHT_FLOOR * top]
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def p(self) -> int:
        return int(self.weights.size)

    @property
    def trace(self) -> float:
        return float(np.sum(self.weights))

    @property
    def trace_sq(self) -> float:
        return float(np.sum(self.weights**2))

    @property
    def max_weight(self) -> float:
        return float(np.max(self.weights))

    @property
    def moments(self) -> Tuple[float, float, float]:
        """(tr Delta, tr Delta^2, ||Delta||_inf)."""
        return self.trace, self.trace_sq, self.max_weight


def _log_envelope(w: np.ndarray, u: float) -> float:
    return -np.log(u) - 0.25 * float(np.sum(np.log1p((w * u) ** 2)))


def envelope_cutoff(dist: QuadFormDist, cutoff: float = ENVELOPE_CUTOFF) -> float:
    """Smallest u with 1/(u rho(u)) below `cutoff` (the envelope is decreasing)."""
    w = dist.weights
    target = np.log(cutoff)
    hi = 1.0 / dist.max_weight
    for _ in range(200):
        if _log_envelope(w, hi) <= target:
            break
        hi *= 2.0
    else:
        raise IntegrationError("Could not bracket the Imhof truncation point", data={"upper": hi})
    lo = hi / 2.0
    if _log_envelope(w, lo) <= target:
        return lo
    return optimize.brentq(lambda u: _log_envelope(w, u) - target, lo, hi, xtol=1e-12 * hi)


def _quad(func: Callable[[float], float], a: float, b: float, **kwargs) -> Tuple[float, float]:
    result = integrate.quad(func, a, b, epsabs=QUAD_EPSABS, epsrel=0.0, limit=QUAD_LIMIT, full_output=1, **kwargs)
    value, abserr = float(result[0]), float(result[1])
    if len(result) > 3:
        message = result[3]
        if abserr > FAIL_TOLERANCE:
            raise IntegrationError(f"Imhof quadrature failed: {message}", data={"abserr": abserr})
        logger.warning(f"Imhof quadrature on [{a:.3g}, {b}] reported: {message} (abserr {abserr:.2e})")
    return value, abserr


def tail_imhof(dist: QuadFormDist, x: float) -> float:
    """P[Q > x] by Imhof inversion, clamped to [0, 1]."""
    if not np.isfinite(x):
        raise RegimeError(f"Threshold must be finite, got {x}")
    if x <= 0:
        return 1.0

    w = dist.weights
    half_x = 0.5 * x
    at_zero = 0.5 * dist.trace - half_x

    def integrand(u: float) -> float:
        if u < 1e-300:
            return at_zero
        theta = 0.5 * np.sum(np.arctan(w * u)) - half_x * u
        return np.sin(theta) * np.exp(_log_envelope(w, u))

    upper = envelope_cutoff(dist)
    split = min(upper, DIRECT_OSCILLATIONS * np.pi / half_x)
    total, err = _quad(integrand, 0.0, split)

    if split < upper:
        def sin_phase(u: float) -> float:
            return np.sin(0.5 * np.sum(np.arctan(w * u))) * np.exp(_log_envelope(w, u))

        def cos_phase(u: float) -> float:
            return np.cos(0.5 * np.sum(np.arctan(w * u))) * np.exp(_log_envelope(w, u))

        cos_part, cos_err = _quad(sin_phase, split, np.inf, weight="cos", wvar=half_x)
        sin_part, sin_err = _quad(cos_phase, split, np.inf, weight="sin", wvar=half_x)
        total += cos_part - sin_part
        err += cos_err + sin_err

    logger.debug(f"Imhof p={dist.p} x={x:.6g}: split {split:.4g}, cutoff {upper:.4g}, abserr {err:.2e}")
    return float(np.clip(0.5 + total / np.pi, 0.0, 1.0))


def tail_montecarlo(
    dist: QuadFormDist, x: float, samples: int, rng: np.random.Generator
) -> Tuple[float, float]:
    """Empirical P[Q > x] and its binomial standard error."""
    if samples < MIN_MC_SAMPLES:
        raise RegimeError(f"Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}")
    if x <= 0:
        return 1.0, 0.0

    w = dist.weights
    hits = 0
    remaining = samples
    while remaining > 0:
        k = min(MC_CHUNK, remaining)
        z = rng.standard_normal((k, w.size))
        hits += int(np.count_nonzero((z * z) @ w > x))
        remaining -= k
    prob = hits / samples
    return prob, float(np.sqrt(prob * (1.0 - prob) / samples))


def laurent_massart_threshold(dist: QuadFormDist, t: float) -> float:
    """Level exceeded with probability at most e^-t: tr + 2 sqrt(tr2 t) + 2 max t."""
    if not t > 0:
        raise RegimeError(f"Exponent t must be positive, got {t}")
    tr, tr2, top = dist.moments
    return tr + 2.0 * np.sqrt(tr2 * t) + 2.0 * top * t


def tail_moment_match(dist: QuadFormDist, x: float) -> float:
    """
    Hall-Buckley-Eagleson approximation.

    Matches the first three cumulants of Q with a shifted and scaled chi^2_nu;
    exact when all weights are equal.
    """
    w = dist.weights
    k1 = float(np.sum(w))
    k2 = 2.0 * float(np.sum(w**2))
    k3 = 8.0 * float(np.sum(w**3))
    nu = 8.0 * k2**3 / k3**2
    x_nu = np.sqrt(2.0 * nu / k2) * (x - k1) + nu
    return float(stats.chi2.sf(x_nu, nu))


def quantile_imhof(dist: QuadFormDist, prob: float) -> float:
    """x with P[Q > x] = prob."""
    if not 0.0 < prob < 1.0:
        raise RegimeError(f"Tail probability must lie in (0, 1), got {prob}")
    hi = dist.trace + 4.0 * np.sqrt(2.0 * dist.trace_sq)
    for _ in range(200):
        if tail_imhof(dist, hi) < prob:
            break
        hi *= 2.0
    else:
        raise IntegrationError("Could not bracket the requested quantile", data={"prob": prob})
    return optimize.brentq(lambda x: tail_imhof(dist, x) - prob, 0.0, hi, xtol=1e-10 * hi)
