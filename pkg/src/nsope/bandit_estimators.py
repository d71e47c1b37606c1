"""Point estimators of J_k(pi) from one interval's logged data.

Every estimator is a survey-sampling estimator of the total of
y(s, a) = P(s) pi(a|s) r(s, a) under the multinomial design p = P(s) pi_b(a|s).
The regression-assisted estimator fits its proxy coefficients by importance
weighted least squares on the same interval and adds a weighted residual
correction to the (known or estimated) population total of the fitted proxy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    IntervalDataset,
    Policy,
    Population,
    ValidationError,
    importance_weights,
)
from .reward_models import FeatureMap, RewardModel
from .smalllinalg import SingularDesign, solve_ridge

CV_GRID = tuple(10.0**e for e in range(-4, 2))


def _nonempty(data: IntervalDataset) -> None:
    if len(data) == 0:
        raise ValidationError("empty dataset")


def is_estimate(data: IntervalDataset, target: Policy) -> float:
    """Importance sampling (equivalently Hansen-Hurwitz) estimate."""
    _nonempty(data)
    w = importance_weights(data, target)
    return float(np.mean(w * data.rewards))


def wis_estimate(data: IntervalDataset, target: Policy) -> float:
    """Self-normalized importance sampling estimate."""
    _nonempty(data)
    w = importance_weights(data, target)
    total = w.sum()
    if not total > 0:
        raise ValidationError("all importance weights are zero; WIS is undefined")
    return float(w @ data.rewards / total)


def _proxy_table(model, pop: Population | None) -> np.ndarray:
    if isinstance(model, np.ndarray):
        return model
    if pop is None:
        raise ValidationError("a population is needed to evaluate a fitted reward model")
    return model.table(pop)


def policy_proxy(target: Policy, proxy: np.ndarray) -> np.ndarray:
    """r_hat_pi(s) = sum_a pi(a|s) r_hat(s, a) for every context."""
    return (target.probs * proxy).sum(axis=1)


def dm_estimate(
    data: IntervalDataset,
    target: Policy,
    model: RewardModel | np.ndarray,
    pop: Population | None = None,
) -> float:
    """Direct method averaged over the sampled contexts."""
    _nonempty(data)
    proxy = _proxy_table(model, pop)
    return float(policy_proxy(target, proxy)[data.contexts].mean())


def _residual_term(data: IntervalDataset, target: Policy, proxy: np.ndarray) -> float:
    w = importance_weights(data, target)
    return float(np.mean(w * (data.rewards - proxy[data.contexts, data.actions])))


def diff_estimate(
    data: IntervalDataset,
    pop: Population,
    target: Policy,
    model: RewardModel | np.ndarray,
) -> float:
    """Difference estimator with a known population total of the proxy."""
    _nonempty(data)
    proxy = _proxy_table(model, pop)
    total = float(pop.context_dist @ policy_proxy(target, proxy))
    return total + _residual_term(data, target, proxy)


def dr_estimate(
    data: IntervalDataset,
    target: Policy,
    model: RewardModel | np.ndarray,
    pop: Population | None = None,
) -> float:
    """Doubly robust: proxy total estimated from the sample's own contexts."""
    _nonempty(data)
    proxy = _proxy_table(model, pop)
    total = float(policy_proxy(target, proxy)[data.contexts].mean())
    return total + _residual_term(data, target, proxy)


# --- regression-assisted estimator -----------------------------------------


class PopTotal(str, enum.Enum):
    KNOWN = "known"
    SAME_SAMPLE = "same_sample"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class PopTotalMode:
    """How the population total of the fitted proxy is obtained.

    ``contexts`` holds the context ids of the independent survey D' and is
    only used (and required) for INDEPENDENT.
    """

    kind: PopTotal = PopTotal.KNOWN
    contexts: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PopTotal(self.kind))
        if self.kind is PopTotal.INDEPENDENT:
            if not self.contexts:
                raise ValidationError("INDEPENDENT mode needs a nonempty past dataset")
            object.__setattr__(self, "contexts", tuple(int(s) for s in self.contexts))

    @classmethod
    def known(cls) -> "PopTotalMode":
        return cls(PopTotal.KNOWN)

    @classmethod
    def same_sample(cls) -> "PopTotalMode":
        return cls(PopTotal.SAME_SAMPLE)

    @classmethod
    def independent(cls, past: Sequence[IntervalDataset] | IntervalDataset) -> "PopTotalMode":
        """Survey made of the contexts (never the rewards) of past datasets."""
        if isinstance(past, IntervalDataset):
            past = [past]
        ctx = [int(s) for d in past for s in d.contexts]
        return cls(PopTotal.INDEPENDENT, tuple(ctx))


def feature_total(
    pop: Population | None,
    target: Policy,
    features: FeatureMap,
    mode: PopTotalMode,
    data: IntervalDataset | None = None,
) -> np.ndarray:
    """Known or estimated total t_x = sum_U P(s) pi(a|s) phi(s, a)."""
    per_context = np.einsum("sa,sap->sp", target.probs, features.table)
    if mode.kind is PopTotal.KNOWN:
        if pop is None:
            raise ValidationError("KNOWN mode needs the population")
        return pop.context_dist @ per_context
    if mode.kind is PopTotal.SAME_SAMPLE:
        if data is None:
            raise ValidationError("SAME_SAMPLE mode needs the interval's data")
        return per_context[data.contexts].mean(axis=0)
    return per_context[np.asarray(mode.contexts)].mean(axis=0)


@dataclass(frozen=True, eq=False)
class RegCoefficients:
    beta: np.ndarray
    gram: np.ndarray
    fitted_on_n: int
    ridge_lambda: float = 0.0

    def __post_init__(self) -> None:
        beta = np.array(self.beta, dtype=float)
        if not np.all(np.isfinite(beta)):
            raise ValidationError("coefficients must be finite")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def fixed(cls, beta) -> "RegCoefficients":
        """Injected coefficients that were not fit on the data."""
        beta = np.asarray(beta, dtype=float)
        return cls(beta, np.full((beta.size, beta.size), np.nan), 0)


def _weighted_design(data: IntervalDataset, target: Policy, features: FeatureMap):
    w = importance_weights(data, target)
    phi = features.table[data.contexts, data.actions]
    return w, phi


def fit_reg_coefficients(
    data: IntervalDataset,
    target: Policy,
    features: FeatureMap,
    ridge_lambda: float = 0.0,
) -> RegCoefficients:
    """beta = (sum_D w phi phi' + lambda I)^-1 sum_D w phi r."""
    _nonempty(data)
    w, phi = _weighted_design(data, target, features)
    gram = (phi * w[:, None]).T @ phi
    rhs = phi.T @ (w * data.rewards)
    beta = solve_ridge(gram, rhs, ridge_lambda)
    return RegCoefficients(beta, gram, len(data), ridge_lambda)


def cv_ridge_lambda(
    data: IntervalDataset,
    target: Policy,
    features: FeatureMap,
    grid: Sequence[float] = CV_GRID,
    folds: int = 5,
    seed: int = 0,
) -> float:
    """Pick the ridge penalty minimizing held-out weighted squared error."""
    n = len(data)
    if n < folds:
        return float(max(grid))
    w, phi = _weighted_design(data, target, features)
    r = data.rewards
    fold_of = np.random.default_rng(seed).permutation(n) % folds
    scores = []
    for lam in grid:
        err = 0.0
        for f in range(folds):
            train = fold_of != f
            wt, pt = w[train], phi[train]
            # the training penalty is scaled to the fold size so lambda is comparable
            gram = (pt * wt[:, None]).T @ pt
            try:
                beta = solve_ridge(gram, pt.T @ (wt * r[train]), lam * train.mean())
            except SingularDesign:
                err = np.inf
                break
            test = ~train
            err += float(np.sum(w[test] * (r[test] - phi[test] @ beta) ** 2))
        scores.append(err)
    return float(grid[int(np.argmin(scores))])


def reg_estimate(
    data: IntervalDataset,
    pop: Population | None,
    target: Policy,
    features: FeatureMap,
    mode: PopTotalMode | None = None,
    ridge_lambda: float = 0.0,
    coeffs: RegCoefficients | None = None,
) -> float:
    """Regression-assisted doubly robust estimate.

    ``coeffs`` overrides the fitted coefficients (e.g. fixed (0, 0) gives IS and
    (0, 1) gives the difference estimator).
    """
    _nonempty(data)
    mode = mode or PopTotalMode.known()
    if coeffs is None:
        coeffs = fit_reg_coefficients(data, target, features, ridge_lambda)
    beta = coeffs.beta
    total = feature_total(pop, target, features, mode, data) @ beta
    w, phi = _weighted_design(data, target, features)
    return float(total + np.mean(w * (data.rewards - phi @ beta)))


def pool_window(
    datasets: Sequence[IntervalDataset] | dict[int, IntervalDataset], k: int, B: int
) -> IntervalDataset:
    """Concatenate D_{k-B}, ..., D_k (B = 0 returns D_k itself)."""
    if B < 0:
        raise ValidationError("window must be >= 0")
    if k - B < 0:
        raise ValidationError(f"window B={B} reaches before interval 0 at k={k}")
    by_k = datasets if isinstance(datasets, dict) else {d.interval: d for d in datasets}
    missing = [t for t in range(k - B, k + 1) if t not in by_k]
    if missing:
        raise ValidationError(f"missing intervals {missing}")
    if B == 0:
        return by_k[k]
    parts = [by_k[t] for t in range(k - B, k + 1)]
    return IntervalDataset(
        k,
        np.concatenate([d.contexts for d in parts]),
        np.concatenate([d.actions for d in parts]),
        np.concatenate([d.rewards for d in parts]),
        np.concatenate([d.behavior_probs for d in parts]),
        by_k[k].reward_bounds,
    )

