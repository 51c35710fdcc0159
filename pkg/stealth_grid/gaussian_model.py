"""
Stochastic model of the grid measurements.

State angles X ~ N(0, Sigma_XX) with a Toeplitz covariance, measurements
Y = H X + Z with Z ~ N(0, sigma^2 I), and the attacked measurements
Y_A = Y + A. All information quantities are in nats.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .grid_jacobian import MeasurementMatrix
from .utils.errors import DimensionError, NotPositiveDefiniteError, RegimeError
from .utils.linalg import check_symmetric, cholesky_lower, logdet, logdet_from_cholesky, psd_eigh, symmetrize

logger = logging.getLogger(__name__)


def toeplitz_cov(n: int, rho: float) -> np.ndarray:
    """Sigma_ij = rho^|i-j|."""
    if n < 1:
        raise DimensionError(f"Toeplitz dimension must be at least 1, got {n}")
    if not 0.0 <= rho < 1.0:
        raise RegimeError(f"Toeplitz decay must lie in [0, 1), got {rho}")
    return linalg.toeplitz(rho ** np.arange(n, dtype=float))


def _h_array(h: MeasurementMatrix) -> np.ndarray:
    return h.h if isinstance(h, MeasurementMatrix) else np.asarray(h, dtype=float)


def signal_covariance(h: MeasurementMatrix, sigma_xx: np.ndarray) -> np.ndarray:
    """H Sigma_XX H^T, symmetrized."""
    ha = _h_array(h)
    sigma_xx = np.asarray(sigma_xx, dtype=float)
    if sigma_xx.shape != (ha.shape[1], ha.shape[1]):
        raise DimensionError(f"Sigma_XX shape {sigma_xx.shape} does not match H with {ha.shape[1]} states")
    return symmetrize(ha @ sigma_xx @ ha.T)


def noise_var_from_snr(h: MeasurementMatrix, sigma_xx: np.ndarray, snr_db: float) -> float:
    """sigma^2 = tr(H Sigma_XX H^T) / (m 10^(snr/10))."""
    signal = signal_covariance(h, sigma_xx)
    trace = float(np.trace(signal))
    if not np.isfinite(trace) or not np.isfinite(snr_db):
        raise RegimeError(f"Cannot derive noise variance from trace {trace} and SNR {snr_db} dB")
    if trace <= 0:
        raise RegimeError("Signal power is zero; SNR is undefined")
    return trace / (signal.shape[0] * 10.0 ** (snr_db / 10.0))


def snr_db_from_noise_var(h: MeasurementMatrix, sigma_xx: np.ndarray, noise_var: float) -> float:
    signal = signal_covariance(h, sigma_xx)
    return float(10.0 * np.log10(np.trace(signal) / (signal.shape[0] * noise_var)))


@dataclass(frozen=True, eq=False)
class StateModel:
    """State covariance and measurement noise level."""

    sigma_xx: np.ndarray
    rho: float
    noise_var: float
    snr_db: float

    def __post_init__(self) -> None:
        sigma_xx = check_symmetric(self.sigma_xx, "Sigma_XX")
        cholesky_lower(sigma_xx, "Sigma_XX")
        if not self.noise_var > 0:
            raise RegimeError(f"Noise variance must be positive, got {self.noise_var}")
        sigma_xx.setflags(write=False)
        object.__setattr__(self, "sigma_xx", sigma_xx)

    @property
    def n(self) -> int:
        return self.sigma_xx.shape[0]

    @classmethod
    def from_snr(cls, h: MeasurementMatrix, rho: float, snr_db: float) -> "StateModel":
        """Toeplitz(rho) state covariance with the noise variance implied by `snr_db`."""
        sigma_xx = toeplitz_cov(_h_array(h).shape[1], rho)
        noise_var = noise_var_from_snr(h, sigma_xx, snr_db)
        logger.debug(f"State model rho={rho}, SNR={snr_db} dB -> noise variance {noise_var:.6g}")
        return cls(sigma_xx=sigma_xx, rho=rho, noise_var=noise_var, snr_db=snr_db)


@dataclass(frozen=True, eq=False)
class GaussianPair:
    """Clean and attacked measurement covariances plus the state/measurement cross-covariance."""

    cov_clean: np.ndarray
    cov_attacked: np.ndarray
    cross_cov: np.ndarray

    def mutual_information(self, sigma_xx: np.ndarray) -> float:
        return gaussian_mi(sigma_xx, self.cross_cov, self.cov_attacked)

    def kl_divergence(self) -> float:
        return gaussian_kl(self.cov_attacked, self.cov_clean)


def measurement_pair(
    h: MeasurementMatrix, model: StateModel, sigma_aa: Optional[np.ndarray] = None
) -> GaussianPair:
    """Covariances of Y and Y + A for an attack covariance `sigma_aa` (zero if omitted)."""
    ha = _h_array(h)
    cov_clean = signal_covariance(ha, model.sigma_xx) + model.noise_var * np.eye(ha.shape[0])
    if sigma_aa is None:
        cov_attacked = cov_clean.copy()
    else:
        sigma_aa = np.asarray(sigma_aa, dtype=float)
        if sigma_aa.shape != cov_clean.shape:
            raise DimensionError(f"Attack covariance shape {sigma_aa.shape} does not match m={ha.shape[0]}")
        cov_attacked = symmetrize(cov_clean + sigma_aa)
    return GaussianPair(cov_clean=cov_clean, cov_attacked=cov_attacked, cross_cov=model.sigma_xx @ ha.T)


def gaussian_kl(cov_p: np.ndarray, cov_q: np.ndarray) -> float:
    """D(N(0, cov_p) || N(0, cov_q)) in nats."""
    lp = cholesky_lower(cov_p, "cov_p")
    lq = cholesky_lower(cov_q, "cov_q")
    if lp.shape != lq.shape:
        raise DimensionError(f"KL arguments differ in shape: {lp.shape} vs {lq.shape}")
    # tr(cov_q^-1 cov_p) = ||Lq^-1 Lp||_F^2
    mixed = linalg.solve_triangular(lq, lp, lower=True, check_finite=False)
    trace_term = float(np.sum(mixed * mixed))
    kl = 0.5 * (logdet_from_cholesky(lq) - logdet_from_cholesky(lp) - lp.shape[0] + trace_term)
    return max(kl, 0.0)


def gaussian_mi(cov_x: np.ndarray, cross: np.ndarray, cov_y: np.ndarray) -> float:
    """
    I(X; Y) for jointly Gaussian X, Y in nats.

    Uses the Schur complement: 1/2 log(|cov_y| / |cov_y - cross^T cov_x^-1 cross|).
    """
    cov_x = np.asarray(cov_x, dtype=float)
    cross = np.asarray(cross, dtype=float)
    cov_y = np.asarray(cov_y, dtype=float)
    if cross.shape != (cov_x.shape[0], cov_y.shape[0]):
        raise DimensionError(
            f"Cross-covariance shape {cross.shape} does not match cov_x {cov_x.shape} and cov_y {cov_y.shape}"
        )
    lx = cholesky_lower(cov_x, "cov_x")
    whitened = linalg.solve_triangular(lx, cross, lower=True, check_finite=False)
    conditional = symmetrize(cov_y - whitened.T @ whitened)
    try:
        mi = 0.5 * (logdet(cov_y, "cov_y") - logdet(conditional, "conditional covariance"))
    except NotPositiveDefiniteError as e:
        raise NotPositiveDefiniteError(f"Joint covariance is not positive definite: {e.message}") from e
    return max(mi, 0.0)


def mvn_factor(cov: np.ndarray) -> np.ndarray:
    """Symmetric square-root factor F with F F^T = cov, clamping tiny negative eigenvalues."""
    w, v = psd_eigh(cov, "covariance")
    return v * np.sqrt(w)


def sample_mvn(cov: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """`count` zero-mean samples as rows of a (count, m) array."""
    factor = mvn_factor(cov)
    z = rng.standard_normal((count, factor.shape[1]))
    return z @ factor.T
