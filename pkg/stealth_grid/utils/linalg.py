"""
Dense linear-algebra helpers shared by the covariance, attack and detection code.

Log-determinants always come from Cholesky factors; eigenvalue clamping for
rank-deficient PSD matrices uses a tolerance relative to the largest
eigenvalue.
"""

import logging
from typing import Tuple

import numpy as np
from scipy import linalg

from .errors import DimensionError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-8
SYMMETRY_TOLERANCE = 1e-10


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part of a square matrix."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def check_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def check_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate symmetry relative to the largest entry and return the symmetric part."""
    a = check_square(a, name)
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    scale = max(float(np.max(np.abs(a))) if a.size else 0.0, 1.0)
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > SYMMETRY_TOLERANCE * scale:
        raise NotPositiveDefiniteError(
            f"{name} is not symmetric (max asymmetry {asym:.3e})", data={"asymmetry": asym}
        )
    return symmetrize(a)


def cholesky_lower(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, raising NotPositiveDefiniteError on failure."""
    a = check_symmetric(a, name)
    try:
        return linalg.cholesky(a, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"{name} is not positive definite: {e}") from e


def logdet_from_cholesky(factor: np.ndarray) -> float:
    return float(2.0 * np.sum(np.log(np.diag(factor))))


def logdet(a: np.ndarray, name: str = "matrix") -> float:
    """Log-determinant of a symmetric positive-definite matrix."""
    return logdet_from_cholesky(cholesky_lower(a, name))


def psd_eigh(a: np.ndarray, name: str = "matrix", tol: float = PSD_TOLERANCE) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigendecomposition of a symmetric PSD matrix with clamping.

    Eigenvalues down to -tol * max|eigenvalue| are accepted and clamped to
    zero; anything more negative is an error.
    """
    a = check_symmetric(a, name)
    w, v = linalg.eigh(a, check_finite=False)
    if w.size == 0:
        return w, v
    scale = float(np.max(np.abs(w)))
    floor = -tol * scale
    if w[0] < floor:
        raise NotPositiveDefiniteError(
            f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3e})",
            data={"min_eigenvalue": float(w[0]), "max_abs_eigenvalue": scale},
        )
    if w[0] < 0:
        logger.debug(f"Clamping {int(np.sum(w < 0))} negative eigenvalues of {name} to zero")
    return np.clip(w, 0.0, None), v


def is_psd(a: np.ndarray, tol: float = PSD_TOLERANCE) -> bool:
    try:
        psd_eigh(a, tol=tol)
    except NotPositiveDefiniteError:
        return False
    return True
