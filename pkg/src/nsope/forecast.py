"""Forecast future policy values with a cosine-basis least-squares fit.

Times are divided by ``time_normalizer`` before entering the basis
psi(u) = (cos(2 pi u n))_{n=0..d-1}; without the division every integer time
maps to the all-ones vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .smalllinalg import SingularDesign, solve_ridge, solve_spd

DEFAULT_BASIS_DIM = 5
DEGENERATE_RIDGE = 1e-8


def cosine_basis(t, d: int, time_normalizer: float) -> np.ndarray:
    u = np.atleast_1d(np.asarray(t, dtype=float)) / time_normalizer
    return np.cos(2.0 * np.pi * np.outer(u, np.arange(d)))


@dataclass(frozen=True, eq=False)
class ForecastModel:
    weights: np.ndarray
    basis_dim: int
    time_normalizer: float

    def predict(self, t_future) -> float | np.ndarray:
        out = cosine_basis(t_future, self.basis_dim, self.time_normalizer) @ self.weights
        return float(out[0]) if np.ndim(t_future) == 0 else out


def fit_forecast(
    estimates: Sequence[tuple[float, float]],
    d: int = DEFAULT_BASIS_DIM,
    time_normalizer: float | None = None,
) -> ForecastModel:
    """Least-squares fit of the estimates J_t on psi(t / time_normalizer).

    With fewer points than basis functions (or a singular design) a ridge of
    1e-8 keeps the normal equations solvable.
    """
    if not estimates:
        raise ValueError("need at least one (t, estimate) pair")
    if d < 1:
        raise ValueError("basis dimension must be >= 1")
    t, y = (np.asarray(v, dtype=float) for v in zip(*estimates))
    if np.unique(t).size != t.size:
        raise ValueError("time points must be distinct")
    if time_normalizer is None:
        time_normalizer = float(t.max())
    psi = cosine_basis(t, d, time_normalizer)
    gram = psi.T @ psi
    rhs = psi.T @ y
    if t.size < d:
        w = solve_ridge(gram, rhs, DEGENERATE_RIDGE)
    else:
        try:
            w = solve_spd(gram, rhs)
        except SingularDesign:
            w = solve_ridge(gram, rhs, DEGENERATE_RIDGE)
    return ForecastModel(w, d, float(time_normalizer))


def predict(model: ForecastModel, t_future) -> float | np.ndarray:
    return model.predict(t_future)
