"""
Generalized stealth attack construction.

The attacker picks a Gaussian attack A ~ N(0, Sigma_AA) minimizing

    f(Sigma_AA) = -(lam - 1) log|Sigma_YY + Sigma_AA| - log|Sigma_AA + sigma^2 I|
                  + lam tr(Sigma_YY^-1 Sigma_AA)

which equals 2 I(X; Y_A) + 2 lam D(P_YA || P_Y) up to a constant. The
closed-form construction is Sigma_AA = H Sigma_XX H^T / lam. The weight
lam >= 1 trades information leakage against detectability.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy import linalg

from .gaussian_model import StateModel, measurement_pair, signal_covariance
from .grid_jacobian import MeasurementMatrix
from .utils.errors import DimensionError, RegimeError
from .utils.linalg import cholesky_lower, is_psd, logdet, psd_eigh, symmetrize

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class AttackSpec:
    """An attack covariance and what it achieves."""

    lam: float
    sigma_aa: np.ndarray
    mi_under_attack: float
    kl_attack: float
    construction: str = "closed_form"

    @property
    def rank(self) -> int:
        w, _ = psd_eigh(self.sigma_aa, "Sigma_AA")
        if w.size == 0 or w[-1] <= 0:
            return 0
        return int(np.sum(w > RANK_TOLERANCE * w[-1]))

    @property
    def trace(self) -> float:
        return float(np.trace(self.sigma_aa))


def _check_lambda(lam: float) -> None:
    if not lam >= 1.0:
        raise RegimeError(
            f"lambda={lam} is outside the lambda >= 1 regime where the attack program is convex",
            data={"lambda": lam},
        )


def _evaluate(h: MeasurementMatrix, model: StateModel, sigma_aa: np.ndarray, lam: float, construction: str) -> AttackSpec:
    pair = measurement_pair(h, model, sigma_aa)
    return AttackSpec(
        lam=float(lam),
        sigma_aa=sigma_aa,
        mi_under_attack=pair.mutual_information(model.sigma_xx),
        kl_attack=pair.kl_divergence(),
        construction=construction,
    )


def optimal_attack(h: MeasurementMatrix, model: StateModel, lam: float) -> AttackSpec:
    """Closed-form attack Sigma_AA = H Sigma_XX H^T / lam."""
    _check_lambda(lam)
    sigma_aa = signal_covariance(h, model.sigma_xx) / lam
    return _evaluate(h, model, sigma_aa, lam, "closed_form")


def stationary_attack(h: MeasurementMatrix, model: StateModel, lam: float) -> AttackSpec:
    """
    Exact minimizer of the objective among covariances sharing the
    eigenvectors of H Sigma_XX H^T.

    Each attack eigenvalue is the positive root of
    lam a (a + sigma^2) = mu (mu + sigma^2); it equals mu at lam = 1.
    """
    _check_lambda(lam)
    mu, vectors = psd_eigh(signal_covariance(h, model.sigma_xx), "H Sigma_XX H^T")
    s2 = model.noise_var
    c = mu * (mu + s2) / lam
    a = 2.0 * c / (s2 + np.sqrt(s2 * s2 + 4.0 * c))
    sigma_aa = symmetrize((vectors * a) @ vectors.T)
    return _evaluate(h, model, sigma_aa, lam, "stationary")


def _positive_spectrum(h: MeasurementMatrix, model: StateModel) -> np.ndarray:
    mu, _ = psd_eigh(signal_covariance(h, model.sigma_xx), "H Sigma_XX H^T")
    if mu.size == 0 or mu[-1] <= 0:
        return np.zeros(0)
    return mu[mu > RANK_TOLERANCE * mu[-1]]


def mi_corollary(h: MeasurementMatrix, model: StateModel, lam: float) -> float:
    """Closed-form I(X; Y_A) under the closed-form attack, from the eigenvalues of H Sigma_XX H^T."""
    _check_lambda(lam)
    mu = _positive_spectrum(h, model)
    return float(0.5 * np.sum(np.log1p(mu / (model.noise_var + mu / lam))))


def no_attack_mi(h: MeasurementMatrix, model: StateModel) -> float:
    """I(X; Y) without attack; the lam -> infinity limit of mi_corollary."""
    mu = _positive_spectrum(h, model)
    return float(0.5 * np.sum(np.log1p(mu / model.noise_var)))


def objective(sigma_aa: np.ndarray, h: MeasurementMatrix, model: StateModel, lam: float) -> float:
    """Weighted attack cost evaluated at a PSD attack covariance."""
    psd_eigh(sigma_aa, "Sigma_AA")
    sigma_aa = symmetrize(np.asarray(sigma_aa, dtype=float))
    pair = measurement_pair(h, model, sigma_aa)
    m = sigma_aa.shape[0]
    clean_factor = cholesky_lower(pair.cov_clean, "Sigma_YY")
    trace_term = float(np.trace(linalg.cho_solve((clean_factor, True), sigma_aa, check_finite=False)))
    return (
        -(lam - 1.0) * logdet(pair.cov_attacked, "Sigma_YY + Sigma_AA")
        - logdet(sigma_aa + model.noise_var * np.eye(m), "Sigma_AA + sigma^2 I")
        + lam * trace_term
    )


def attack_objective_terms(
    sigma_aa: np.ndarray, h: MeasurementMatrix, model: StateModel, lam: float
) -> Tuple[float, float]:
    """(I(X; Y_A), D(P_YA || P_Y)) for an arbitrary attack covariance."""
    psd_eigh(sigma_aa, "Sigma_AA")
    attack = _evaluate(h, model, symmetrize(np.asarray(sigma_aa, dtype=float)), lam, "custom")
    return attack.mi_under_attack, attack.kl_attack


def _range_basis(sigma: np.ndarray) -> np.ndarray:
    w, v = psd_eigh(sigma, "Sigma_AA")
    if w.size == 0 or w[-1] <= 0:
        return np.zeros((sigma.shape[0], 0))
    return v[:, w > RANK_TOLERANCE * w[-1]]


def stationarity_residual(
    sigma_aa: np.ndarray,
    h: MeasurementMatrix,
    model: StateModel,
    lam: float,
    directions: int = 50,
    seed: int = 0,
    rel_step: float = 1e-5,
) -> float:
    """
    Largest central-difference directional derivative of the objective at `sigma_aa`.

    Directions are random symmetric matrices supported on the range of
    `sigma_aa` (the face of the PSD cone the point lies on), normalized to
    unit Frobenius norm. Directions that would leave the cone are skipped.
    """
    sigma_aa = symmetrize(np.asarray(sigma_aa, dtype=float))
    basis = _range_basis(sigma_aa)
    r = basis.shape[1]
    if r == 0:
        raise RegimeError("No two-sided PSD directions at a zero attack covariance")

    eps = rel_step * float(np.linalg.norm(sigma_aa, "fro"))
    rng = np.random.default_rng(seed)
    f: Callable[[np.ndarray], float] = lambda s: objective(s, h, model, lam)

    residual = 0.0
    used = 0
    for _ in range(directions):
        g = rng.standard_normal((r, r))
        v = basis @ (0.5 * (g + g.T)) @ basis.T
        v /= np.linalg.norm(v, "fro")
        plus, minus = sigma_aa + eps * v, sigma_aa - eps * v
        if not (is_psd(plus) and is_psd(minus)):
            continue
        residual = max(residual, abs(f(plus) - f(minus)) / (2.0 * eps))
        used += 1

    if used == 0:
        raise RegimeError("Every perturbation direction left the PSD cone; reduce rel_step")
    logger.debug(f"Stationarity residual {residual:.3e} over {used}/{directions} directions (step {eps:.3e})")
    return residual


def optimality_residual(
    h: MeasurementMatrix, model: StateModel, lam: float, directions: int = 50, seed: int = 0
) -> float:
    """Finite-difference stationarity residual at the closed-form attack."""
    attack = optimal_attack(h, model, lam)
    return stationarity_residual(attack.sigma_aa, h, model, lam, directions=directions, seed=seed)


def mismatched_attack(
    h_true: MeasurementMatrix, h_assumed: MeasurementMatrix, model: StateModel, lam: float
) -> AttackSpec:
    """
    Attack built from `h_assumed`, scored against measurements generated by `h_true`.

    The operator is assumed to know the injected covariance, so detection and
    information are evaluated with the true compromised distribution.
    """
    _check_lambda(lam)
    if h_true.h.shape != h_assumed.h.shape:
        raise DimensionError(f"H shapes differ: {h_true.h.shape} vs {h_assumed.h.shape}")
    sigma_aa = signal_covariance(h_assumed, model.sigma_xx) / lam
    return _evaluate(h_true, model, sigma_aa, lam, "mismatched")
