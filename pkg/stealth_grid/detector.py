"""
Operator-side detection of the stealth attack.

The operator runs the likelihood ratio test log f_YA(y)/f_Y(y) >= log tau.
Under the closed-form attack the exceedance event reduces to a weighted
chi-squared tail with weights mu_i/(mu_i + sigma^2), mu_i being the
positive eigenvalues of H Sigma_XX H^T. A Laurent-Massart bound on that
tail gives a closed-form guarantee P_D <= e^-t for lam >= lambda_star(t).
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Tuple, Union

import numpy as np
from scipy import linalg, optimize

from .attack_engine import AttackSpec
from .gaussian_model import StateModel, sample_mvn, signal_covariance
from .grid_jacobian import MeasurementMatrix
from .utils.errors import DimensionError, RegimeError
from .utils.linalg import cholesky_lower, logdet_from_cholesky, psd_eigh
from .weighted_chisq import (
    MC_CHUNK,
    MIN_MC_SAMPLES,
    QuadFormDist,
    tail_imhof,
    tail_montecarlo,
)

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class DetectionSpectrum:
    """Weights of the detection quadratic form and the LRT level they are compared with."""

    delta_diag: np.ndarray
    p: int
    tau: float
    lam: float
    threshold_rhs: float

    @property
    def moments(self) -> Tuple[float, float, float]:
        """(tr Delta, tr Delta^2, ||Delta||_inf)."""
        return self.distribution().moments

    @cached_property
    def _distribution(self) -> QuadFormDist:
        return QuadFormDist(self.delta_diag)

    def distribution(self) -> QuadFormDist:
        return self._distribution


def _check_tau(tau: float, strict: bool = False) -> None:
    if strict and not tau > 1.0:
        raise RegimeError(f"The detection bound needs tau > 1, got {tau}", data={"tau": tau})
    if not tau > 0.0:
        raise RegimeError(f"LRT threshold tau must be positive, got {tau}", data={"tau": tau})


def detection_weights(h: MeasurementMatrix, model: StateModel) -> np.ndarray:
    """mu_i/(mu_i + sigma^2) over the positive eigenvalues of H Sigma_XX H^T, descending."""
    mu, _ = psd_eigh(signal_covariance(h, model.sigma_xx), "H Sigma_XX H^T")
    if mu.size == 0 or mu[-1] <= 0:
        raise RegimeError("H Sigma_XX H^T is zero; there is nothing to detect")
    mu = mu[mu > RANK_TOLERANCE * mu[-1]][::-1]
    logger.debug(f"Detection spectrum rank {mu.size} (tolerance {RANK_TOLERANCE * mu[0]:.3e})")
    return mu / (mu + model.noise_var)


def build_spectrum(h: MeasurementMatrix, model: StateModel, lam: float, tau: float) -> DetectionSpectrum:
    if not lam >= 1.0:
        raise RegimeError(f"lambda={lam} is outside the lambda >= 1 regime", data={"lambda": lam})
    _check_tau(tau)
    w = detection_weights(h, model)
    w.setflags(write=False)
    rhs = lam * (2.0 * np.log(tau) + float(np.sum(np.log1p(w / lam))))
    return DetectionSpectrum(delta_diag=w, p=int(w.size), tau=float(tau), lam=float(lam), threshold_rhs=rhs)


def prob_detection(spectrum: DetectionSpectrum) -> float:
    """Exact P_D by Imhof inversion."""
    return tail_imhof(spectrum.distribution(), spectrum.threshold_rhs)


def tail_quadform_mc(spectrum: DetectionSpectrum, samples: int, rng: np.random.Generator) -> Tuple[float, float]:
    """P_D by sampling the quadratic form directly; returns (probability, std error)."""
    return tail_montecarlo(spectrum.distribution(), spectrum.threshold_rhs, samples, rng)


def lrt_statistic(
    y: np.ndarray, cov_clean: np.ndarray, cov_attacked: np.ndarray
) -> Union[float, np.ndarray]:
    """
    log f_YA(y) / f_Y(y) for a vector y, or row-wise for a (k, m) array.

    1/2 [y^T (Sigma_Y^-1 - Sigma_YA^-1) y + log |Sigma_Y| / |Sigma_YA|]
    """
    clean = cholesky_lower(cov_clean, "clean covariance")
    attacked = cholesky_lower(cov_attacked, "attacked covariance")
    if clean.shape != attacked.shape:
        raise DimensionError(f"Covariance shapes differ: {clean.shape} vs {attacked.shape}")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    rows = np.atleast_2d(y)
    if rows.shape[1] != clean.shape[0]:
        raise DimensionError(f"Measurement length {rows.shape[1]} does not match m={clean.shape[0]}")

    wc = linalg.solve_triangular(clean, rows.T, lower=True, check_finite=False)
    wa = linalg.solve_triangular(attacked, rows.T, lower=True, check_finite=False)
    quad = np.sum(wc * wc, axis=0) - np.sum(wa * wa, axis=0)
    log_ratio = 0.5 * (quad + logdet_from_cholesky(clean) - logdet_from_cholesky(attacked))
    return float(log_ratio[0]) if single else log_ratio


@dataclass(frozen=True)
class EmpiricalRates:
    """Monte Carlo detection and false-alarm rates of the LRT."""

    p_detect: float
    p_false_alarm: float
    detect_stderr: float
    false_alarm_stderr: float
    trials: int
    mean_log_ratio: float
    log_ratio_stderr: float = 0.0


def _binomial(hits: int, trials: int) -> Tuple[float, float]:
    p = hits / trials
    return p, float(np.sqrt(p * (1.0 - p) / trials))


def simulate_lrt(
    h_true: MeasurementMatrix,
    model: StateModel,
    attack: AttackSpec,
    tau: float,
    trials: int,
    rng: np.random.Generator,
) -> EmpiricalRates:
    """
    Run the LRT on `trials` attacked and `trials` clean measurement vectors.

    State, noise and attack are sampled separately; draws come from `rng`
    in chunks, in a fixed order.
    """
    _check_tau(tau)
    ha = h_true.h
    m = ha.shape[0]
    cov_clean = signal_covariance(h_true, model.sigma_xx) + model.noise_var * np.eye(m)
    cov_attacked = cov_clean + attack.sigma_aa
    log_tau = np.log(tau)
    noise_sd = np.sqrt(model.noise_var)

    detected = false_alarms = 0
    ratio_sum = ratio_sq = 0.0
    remaining = trials
    while remaining > 0:
        k = min(MC_CHUNK, remaining)
        x = sample_mvn(model.sigma_xx, k, rng)
        z = rng.normal(0.0, noise_sd, size=(k, m))
        a = sample_mvn(attack.sigma_aa, k, rng)
        attacked = lrt_statistic(x @ ha.T + z + a, cov_clean, cov_attacked)

        x0 = sample_mvn(model.sigma_xx, k, rng)
        z0 = rng.normal(0.0, noise_sd, size=(k, m))
        clean = lrt_statistic(x0 @ ha.T + z0, cov_clean, cov_attacked)

        detected += int(np.count_nonzero(attacked >= log_tau))
        false_alarms += int(np.count_nonzero(clean >= log_tau))
        ratio_sum += float(np.sum(attacked))
        ratio_sq += float(np.sum(attacked * attacked))
        remaining -= k

    p_d, se_d = _binomial(detected, trials)
    p_fa, se_fa = _binomial(false_alarms, trials)
    mean = ratio_sum / trials
    var = max(ratio_sq / trials - mean * mean, 0.0)
    return EmpiricalRates(
        p_detect=p_d,
        p_false_alarm=p_fa,
        detect_stderr=se_d,
        false_alarm_stderr=se_fa,
        trials=trials,
        mean_log_ratio=mean,
        log_ratio_stderr=float(np.sqrt(var / trials)),
    )


def empirical_rates(
    h_true: MeasurementMatrix,
    model: StateModel,
    attack: AttackSpec,
    tau: float,
    trials: int,
    rng: np.random.Generator,
) -> EmpiricalRates:
    """Empirical P_D and P_FA with binomial standard errors."""
    if trials < MIN_MC_SAMPLES:
        raise RegimeError(f"Empirical rates need at least {MIN_MC_SAMPLES} trials, got {trials}")
    return simulate_lrt(h_true, model, attack, tau, trials, rng)


def pool_rates(parts: Iterable[EmpiricalRates]) -> EmpiricalRates:
    """Combine independent runs as one run over all their trials."""
    parts = list(parts)
    if not parts:
        raise RegimeError("Nothing to pool")
    trials = sum(r.trials for r in parts)
    detected = sum(round(r.p_detect * r.trials) for r in parts)
    false_alarms = sum(round(r.p_false_alarm * r.trials) for r in parts)
    p_d, se_d = _binomial(detected, trials)
    p_fa, se_fa = _binomial(false_alarms, trials)
    mean = sum(r.mean_log_ratio * r.trials for r in parts) / trials
    # per-part population variance is stderr^2 * trials
    second = sum(r.trials * (r.log_ratio_stderr**2 * r.trials + r.mean_log_ratio**2) for r in parts) / trials
    var = max(second - mean * mean, 0.0)
    return EmpiricalRates(
        p_detect=p_d,
        p_false_alarm=p_fa,
        detect_stderr=se_d,
        false_alarm_stderr=se_fa,
        trials=trials,
        mean_log_ratio=mean,
        log_ratio_stderr=float(np.sqrt(var / trials)),
    )


def lambda_star(tr_delta_sq: float, delta_inf: float, tau: float, t: float) -> float:
    """
    Positive root of 2 lam log tau - tr(Delta^2)/(2 lam) = 2 sqrt(tr(Delta^2) t) + 2 ||Delta||_inf t.

    For every lam >= max(lambda_star, 1), P_D(lam) <= e^-t.
    """
    _check_tau(tau, strict=True)
    if not t > 0:
        raise RegimeError(f"Exponent t must be positive, got {t}")
    a = 2.0 * np.log(tau)
    b = 2.0 * np.sqrt(tr_delta_sq * t) + 2.0 * delta_inf * t
    c = 0.5 * tr_delta_sq
    return float((b + np.sqrt(b * b + 4.0 * a * c)) / (2.0 * a))


def bound_exponent(tr_delta_sq: float, delta_inf: float, tau: float, lam: float) -> Tuple[float, float]:
    """
    Largest t with lambda_star(t) <= lam, and the bound e^-t.

    Returns the vacuous (0, 1) when 2 lam log tau <= tr(Delta^2)/(2 lam).
    """
    _check_tau(tau, strict=True)
    if not lam >= 1.0:
        raise RegimeError(f"lambda={lam} is outside the lambda >= 1 regime", data={"lambda": lam})
    r = 2.0 * lam * np.log(tau) - tr_delta_sq / (2.0 * lam)
    if r <= 0:
        return 0.0, 1.0
    # positive root of 2 ||Delta||_inf s^2 + 2 sqrt(tr Delta^2) s - r = 0, s = sqrt(t)
    b = 2.0 * np.sqrt(tr_delta_sq)
    s = 2.0 * r / (b + np.sqrt(b * b + 8.0 * delta_inf * r))
    t = float(s * s)
    return t, float(np.exp(-t))


def _check_target(target_pd: float) -> None:
    if not 0.0 < target_pd < 1.0:
        raise RegimeError(f"Target detection probability must lie in (0, 1), got {target_pd}")


def design_lambda(h: MeasurementMatrix, model: StateModel, tau: float, target_pd: float) -> float:
    """Smallest lam >= 1 for which the Laurent-Massart bound guarantees P_D <= target_pd."""
    _check_tau(tau, strict=True)
    _check_target(target_pd)
    _, tr2, top = QuadFormDist(detection_weights(h, model)).moments
    return max(lambda_star(tr2, top, tau, -np.log(target_pd)), 1.0)


def exact_lambda(h: MeasurementMatrix, model: StateModel, tau: float, target_pd: float) -> float:
    """Smallest lam >= 1 with exact P_D(lam) <= target_pd."""
    _check_tau(tau, strict=True)
    _check_target(target_pd)

    def excess(lam: float) -> float:
        return prob_detection(build_spectrum(h, model, lam, tau)) - target_pd

    if excess(1.0) <= 0:
        return 1.0
    lo, hi = 1.0, 2.0
    for _ in range(60):
        if excess(hi) <= 0:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise RegimeError(f"P_D stays above {target_pd} for every lambda up to {hi:g}")
    lam = optimize.brentq(excess, lo, hi, xtol=1e-8 * hi)
    logger.debug(f"Exact lambda for P_D <= {target_pd} at tau={tau}: {lam:.6g}")
    return float(lam)
