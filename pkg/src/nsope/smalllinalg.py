"""Small dense symmetric solves for the regression fits.

Systems here are tiny (p is 1 to a few dozen), so a Cholesky factorization is
used directly. A singular or indefinite system is an error: callers that want
stabilization pass an explicit ridge penalty.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

SYMMETRY_TOL = 1e-9
# smallest admissible squared pivot, relative to the largest diagonal entry
PIVOT_RTOL = 1e-12


class SingularDesign(np.linalg.LinAlgError):
    """Raised when a Gram/design matrix is singular or not positive definite."""


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive definite ``a``.

    Raises
    ------
    SingularDesign
        If ``a`` is singular or indefinite beyond round-off.
    """
    a = as_matrix(a)
    b = np.asarray(b, dtype=float)
    p = a.shape[0]
    if a.shape != (p, p) or b.shape[0] != p:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    diag_max = float(np.abs(np.diag(a)).max()) if p else 0.0
    if diag_max == 0.0:
        raise SingularDesign("zero matrix")
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise SingularDesign("matrix is not positive definite") from None
    if np.min(np.diag(chol)) ** 2 <= PIVOT_RTOL * diag_max:
        raise SingularDesign("matrix is numerically singular")
    y = solve_triangular(chol, b, lower=True)
    return solve_triangular(chol.T, y, lower=False)


def solve_ridge(a, b, lam: float) -> np.ndarray:
    """Solve ``(a + lam * I) x = b``."""
    if lam < 0:
        raise ValueError("ridge penalty must be nonnegative")
    a = as_matrix(a)
    if lam == 0:
        return solve_spd(a, b)
    return solve_spd(a + lam * np.eye(a.shape[0]), b)


def inv_spd(a) -> np.ndarray:
    a = as_matrix(a)
    return solve_spd(a, np.eye(a.shape[0]))
