"""Per-action linear reward models and the feature maps built from them."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DEFAULT_REWARD_BOUNDS, IntervalDataset, Population, ValidationError
from .smalllinalg import SingularDesign, solve_spd


@dataclass(frozen=True, eq=False)
class RewardModel:
    """r_hat(s, a) = clamp(w_a . (1, x_s)) with one weight vector per action."""

    per_action_weights: np.ndarray
    trained_on: tuple[int, ...] = ()
    bounds: tuple[float, float] = DEFAULT_REWARD_BOUNDS
    fallback_actions: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        w = np.array(self.per_action_weights, dtype=float)
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise ValidationError("reward model weights must be a finite 2-d array")
        w.setflags(write=False)
        object.__setattr__(self, "per_action_weights", w)

    @property
    def num_actions(self) -> int:
        return self.per_action_weights.shape[0]

    def table(self, pop: Population) -> np.ndarray:
        """Clamped predictions for every (s, a), shape (|S|, |A|)."""
        design = np.hstack([np.ones((pop.num_contexts, 1)), pop.context_features])
        if design.shape[1] != self.per_action_weights.shape[1]:
            raise ValidationError("reward model was fit with a different feature dimension")
        return np.clip(design @ self.per_action_weights.T, *self.bounds)

    def predict(self, pop: Population, context: int, action: int) -> float:
        x = np.concatenate([[1.0], pop.context_features[context]])
        return float(np.clip(x @ self.per_action_weights[action], *self.bounds))

    @classmethod
    def constant(cls, values, feature_dim: int, **kwargs) -> "RewardModel":
        """Model predicting a fixed value per action (``values`` scalar or length |A|)."""
        values = np.atleast_1d(np.asarray(values, dtype=float))
        w = np.zeros((values.size, feature_dim + 1))
        w[:, 0] = values
        return cls(w, **kwargs)

    def to_json(self) -> str:
        return json.dumps({str(a): w.tolist() for a, w in enumerate(self.per_action_weights)})


class TabularRewardModel(RewardModel):
    """Reward model given directly as an |S| x |A| table (oracles and tests)."""

    def __init__(self, values, bounds: tuple[float, float] = DEFAULT_REWARD_BOUNDS):
        values = np.array(values, dtype=float)
        super().__init__(np.zeros((values.shape[1], 1)), (), bounds)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def table(self, pop: Population) -> np.ndarray:
        return self.values

    def predict(self, pop: Population, context: int, action: int) -> float:
        return float(self.values[context, action])


def fit_reward_model(
    pop: Population,
    window_data: Sequence[IntervalDataset],
    ridge: float = 0.0,
    bounds: tuple[float, float] = DEFAULT_REWARD_BOUNDS,
) -> RewardModel:
    """Least-squares fit of reward on (1, x_s), separately for each action.

    An action whose design is rank deficient falls back to its mean reward; an
    action absent from the window falls back to the pooled mean reward. A
    positive ``ridge`` penalizes the non-intercept weights.
    """
    if not window_data:
        raise ValidationError("reward model needs at least one interval of data")
    contexts = np.concatenate([d.contexts for d in window_data])
    actions = np.concatenate([d.actions for d in window_data])
    rewards = np.concatenate([d.rewards for d in window_data])
    if contexts.max() >= pop.num_contexts or actions.max() >= pop.num_actions:
        raise ValidationError("window data references ids outside the population")

    p = pop.feature_dim + 1
    design = np.hstack([np.ones((pop.num_contexts, 1)), pop.context_features])
    penalty = np.full(p, float(ridge))
    penalty[0] = 0.0
    global_mean = float(rewards.mean())
    weights = np.zeros((pop.num_actions, p))
    fallback = []
    for a in range(pop.num_actions):
        mask = actions == a
        if not mask.any():
            weights[a, 0] = global_mean
            fallback.append(a)
            continue
        x = design[contexts[mask]]
        y = rewards[mask]
        if ridge == 0 and (x.shape[0] < p or np.linalg.matrix_rank(x) < p):
            weights[a, 0] = y.mean()
            fallback.append(a)
            continue
        try:
            weights[a] = solve_spd(x.T @ x + np.diag(penalty), x.T @ y)
        except SingularDesign:
            weights[a, 0] = y.mean()
            fallback.append(a)
    trained_on = tuple(sorted({d.interval for d in window_data}))
    return RewardModel(weights, trained_on, bounds, tuple(fallback))


class FeatureKind(str, enum.Enum):
    CONSTANT = "constant"
    REG = "reg"
    REG_AR = "reg_ar"
    REG_FEATURE = "reg_feature"
    REG_PLUS_FEATURE = "reg_plus_feature"
    REG_AR_PLUS_FEATURE = "reg_ar_plus_feature"


@dataclass(frozen=True)
class FeatureConfig:
    kind: FeatureKind = FeatureKind.REG
    window: int = 1
    # a float, or "cv" for 5-fold cross-validation over a log grid
    ridge_lambda: float | str = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        if self.window < 0:
            raise ValidationError("window must be >= 0")
        if isinstance(self.ridge_lambda, str):
            if self.ridge_lambda != "cv":
                raise ValidationError("ridge_lambda must be a number or 'cv'")
        elif self.ridge_lambda < 0:
            raise ValidationError("ridge_lambda must be >= 0")

    @property
    def uses_models(self) -> bool:
        return self.kind not in (FeatureKind.CONSTANT, FeatureKind.REG_FEATURE)

    @property
    def per_interval_models(self) -> bool:
        return self.kind in (FeatureKind.REG_AR, FeatureKind.REG_AR_PLUS_FEATURE)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """phi(s, a) for every context/action pair, stored as a (|S|, |A|, p) table."""

    table: np.ndarray
    kind: FeatureKind = field(default=FeatureKind.REG)

    def __post_init__(self) -> None:
        t = np.array(self.table, dtype=float)
        if t.ndim != 3:
            raise ValidationError("feature table must have shape (|S|, |A|, p)")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def dim(self) -> int:
        return self.table.shape[2]

    def __call__(self, context: int, action: int) -> np.ndarray:
        return self.table[context, action]

    @classmethod
    def constant(cls, num_contexts: int, num_actions: int) -> "FeatureMap":
        return cls(np.ones((num_contexts, num_actions, 1)), FeatureKind.CONSTANT)

    @classmethod
    def from_proxy(cls, proxy) -> "FeatureMap":
        """phi(s, a) = (1, proxy[s, a]) from an |S| x |A| proxy table."""
        proxy = np.asarray(proxy, dtype=float)
        return cls(np.stack([np.ones_like(proxy), proxy], axis=-1), FeatureKind.REG)


def build_features(
    config: FeatureConfig, pop: Population, models: Sequence[RewardModel]
) -> FeatureMap:
    """Assemble the regression feature map for one interval.

    ``models`` is empty for CONSTANT and REG_FEATURE, a single window-pooled
    model for REG variants, and one model per past interval (oldest first)
    for REG_AR variants.
    """
    kind = config.kind
    S, A = pop.num_contexts, pop.num_actions
    if kind in (FeatureKind.CONSTANT, FeatureKind.REG_FEATURE):
        expected = 0
    elif kind in (FeatureKind.REG, FeatureKind.REG_PLUS_FEATURE):
        expected = 1
    else:
        expected = config.window
        if expected < 1:
            raise ValidationError(f"{kind.value} needs a window of at least one interval")
    if len(models) != expected:
        raise ValidationError(f"{kind.value} expects {expected} reward model(s), got {len(models)}")

    blocks = [np.ones((S, A, 1))]
    for m in models:
        blocks.append(m.table(pop)[:, :, None])
    if kind in (FeatureKind.REG_FEATURE, FeatureKind.REG_PLUS_FEATURE,
                FeatureKind.REG_AR_PLUS_FEATURE):
        x = np.broadcast_to(pop.context_features[:, None, :], (S, A, pop.feature_dim))
        blocks.append(x)
    return FeatureMap(np.concatenate(blocks, axis=2), kind)
