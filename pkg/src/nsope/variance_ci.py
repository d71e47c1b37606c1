"""Variance estimators and large-sample normal confidence intervals.

Most estimators here are Hansen-Hurwitz estimators (1/n) sum_i u_i of some
per-sample term u_i, so their variance estimator is the Sen-Yates-Grundy form
for the multinomial design,

    V_hat = 1 / (n (n - 1)) * (sum_i u_i^2 - n * mean(u)^2),

which coincides with the sample variance of u divided by n.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bandit_estimators import (
    PopTotalMode,
    RegCoefficients,
    feature_total,
    fit_reg_coefficients,
    policy_proxy,
    wis_estimate,
    _proxy_table,
)
from .core import IntervalDataset, Policy, Population, ValidationError, importance_weights
from .reward_models import FeatureMap
from .smalllinalg import solve_spd

NEG_VAR_SLACK = 1e-12


def _clamp_variance(v: float) -> float:
    if v < 0:
        if v < -NEG_VAR_SLACK:
            raise ArithmeticError(f"negative variance estimate {v:.3g}")
        return 0.0
    return float(v)


def syg_variance(terms: np.ndarray) -> float:
    """Sen-Yates-Grundy variance of the HH mean of ``terms``."""
    terms = np.asarray(terms, dtype=float)
    n = terms.size
    if n < 2:
        raise ValidationError("variance estimation needs at least two samples")
    # centered form, numerically equal to (sum u^2 - n ubar^2) / (n (n-1))
    centered = terms - terms.mean()
    return _clamp_variance(float(centered @ centered) / (n * (n - 1)))


def var_is(data: IntervalDataset, target: Policy) -> float:
    w = importance_weights(data, target)
    return syg_variance(w * data.rewards)


def var_wis(data: IntervalDataset, target: Policy) -> float:
    """Taylor-linearized variance of the ratio (WIS) estimator."""
    t_wis = wis_estimate(data, target)
    w = importance_weights(data, target)
    return syg_variance(w * (data.rewards - t_wis))


def var_diff(data: IntervalDataset, target: Policy, model, pop: Population | None = None) -> float:
    proxy = _proxy_table(model, pop)
    w = importance_weights(data, target)
    return syg_variance(w * (data.rewards - proxy[data.contexts, data.actions]))


def dr_terms(data: IntervalDataset, target: Policy, proxy: np.ndarray) -> np.ndarray:
    """(pi (r - r_hat) + pi_b r_hat_pi(s)) / pi_b for every sample."""
    w = importance_weights(data, target)
    return w * (data.rewards - proxy[data.contexts, data.actions]) + policy_proxy(
        target, proxy
    )[data.contexts]


def var_dr(data: IntervalDataset, target: Policy, model, pop: Population | None = None) -> float:
    return syg_variance(dr_terms(data, target, _proxy_table(model, pop)))


def g_weights(
    data: IntervalDataset,
    pop: Population | None,
    target: Policy,
    features: FeatureMap,
    coeffs: RegCoefficients,
    mode: PopTotalMode | None = None,
) -> np.ndarray:
    """g_i = 1 + (t_x - t_hat_x)' (sum_D w phi phi' / n)^-1 phi_i."""
    mode = mode or PopTotalMode.known()
    n = len(data)
    w = importance_weights(data, target)
    phi = features.table[data.contexts, data.actions]
    t_x = feature_total(pop, target, features, mode, data)
    t_hat = (w[:, None] * phi).mean(axis=0)
    gram = coeffs.gram if coeffs.fitted_on_n == n else (phi * w[:, None]).T @ phi
    direction = solve_spd(gram / n, t_x - t_hat)
    return 1.0 + phi @ direction


def var_reg(
    data: IntervalDataset,
    target: Policy,
    features: FeatureMap,
    coeffs: RegCoefficients | None = None,
    g_weighted: bool = False,
    mode: PopTotalMode | None = None,
    pop: Population | None = None,
) -> float:
    """Weighted-residual variance of the regression-assisted estimator."""
    if coeffs is None:
        coeffs = fit_reg_coefficients(data, target, features)
    w = importance_weights(data, target)
    phi = features.table[data.contexts, data.actions]
    resid = data.rewards - phi @ coeffs.beta
    if g_weighted:
        resid = resid * g_weights(data, pop, target, features, coeffs, mode)
    return syg_variance(w * resid)


def var_dm_model_based(
    data: IntervalDataset,
    target: Policy,
    features: FeatureMap,
    pop: Population,
) -> float:
    """Model-based variance sigma^2 t_x' (sum_D phi phi')^-1 t_x of the DM total."""
    phi = features.table[data.contexts, data.actions]
    n, p = phi.shape
    if n <= p:
        raise ValidationError(f"model-based variance needs n > p (n={n}, p={p})")
    gram = phi.T @ phi
    beta = solve_spd(gram, phi.T @ data.rewards)
    resid = data.rewards - phi @ beta
    sigma2 = float(resid @ resid) / (n - p)
    t_x = feature_total(pop, target, features, PopTotalMode.known())
    return _clamp_variance(sigma2 * float(t_x @ solve_spd(gram, t_x)))


# --- confidence intervals ---------------------------------------------------

# Acklam's rational approximation to the standard normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, absolute error below 1.2e-8 on (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1
        )
    if p > 1 - _P_LOW:
        return -normal_quantile(1 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1
    )


def z_value(alpha: float) -> float:
    """Upper 100(1 - alpha) percentile z_alpha."""
    return normal_quantile(1.0 - alpha)


class Sided(str, enum.Enum):
    TWO = "two"
    LOWER = "lower"


def build_ci(
    estimate: float, var_hat: float, alpha: float = 0.05, sided: Sided | str = Sided.TWO
) -> tuple[float, float]:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not var_hat >= 0:
        raise ValueError("variance must be nonnegative")
    sided = Sided(sided)
    sd = math.sqrt(var_hat)
    if sided is Sided.TWO:
        half = z_value(alpha / 2) * sd
        return estimate - half, estimate + half
    return estimate - z_value(alpha) * sd, math.inf


@dataclass(frozen=True)
class EstimateReport:
    estimator_id: str
    interval: int
    estimate: float
    var_hat: float
    ci_lo: float
    ci_hi: float
    alpha: float = 0.05
    note: str = ""

    def __post_init__(self) -> None:
        if not math.isnan(self.var_hat) and self.var_hat < 0:
            raise ValidationError("var_hat must be nonnegative")

    @classmethod
    def from_estimate(
        cls,
        estimator_id: str,
        interval: int,
        estimate: float,
        var_hat: float,
        alpha: float = 0.05,
        sided: Sided | str = Sided.TWO,
        note: str = "",
    ) -> "EstimateReport":
        if math.isnan(var_hat):
            lo = hi = math.nan
        else:
            lo, hi = build_ci(estimate, var_hat, alpha, sided)
        return cls(estimator_id, interval, float(estimate), float(var_hat), lo, hi, alpha, note)

    def covers(self, value: float) -> bool:
        return self.ci_lo <= value <= self.ci_hi

    @property
    def width(self) -> float:
        return self.ci_hi - self.ci_lo


# --- exact oracle -----------------------------------------------------------


def exact_variance_oracle(
    pop: Population,
    target: Policy,
    behavior: Policy,
    transform: Callable[[int, int], float] | np.ndarray,
    n: int = 1,
) -> float:
    """Exact variance of the HH estimator of sum P pi z under p = P pi_b.

    V = (1/n) (sum_U y^2 / p - t_y^2) with y(s, a) = P(s) pi(a|s) z(s, a).
    """
    if callable(transform):
        z = np.array([[transform(s, a) for a in pop.actions] for s in pop.contexts], float)
    else:
        z = np.asarray(transform, dtype=float)
    y = pop.context_dist[:, None] * target.probs * z
    p = pop.context_dist[:, None] * behavior.probs
    if np.any((p == 0) & (y != 0)):
        raise ValidationError("a unit with nonzero study variable has zero sampling probability")
    ratio = np.divide(y**2, p, out=np.zeros_like(y), where=p > 0)
    return float((ratio.sum() - y.sum() ** 2) / n)
