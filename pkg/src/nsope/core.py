"""Domain types shared by every estimator: populations, policies and logged data.

Contexts and actions are dense integer ids. Logged datasets keep the behavior
propensity of every sample so that externally ingested logs (whose full
behavior policy may be unknown) are handled the same way as simulated ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Protocol, Sequence

import numpy as np

SIMPLEX_TOL = 1e-12
DEFAULT_REWARD_BOUNDS = (-10.0, 10.0)


class ValidationError(ValueError):
    """Input violates a structural invariant (shape, simplex, bounds...)."""


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_simplex_rows(probs: np.ndarray, name: str) -> None:
    if np.any(probs < 0):
        raise ValidationError(f"{name} has negative entries")
    err = np.abs(probs.sum(axis=-1) - 1.0)
    if np.any(err > SIMPLEX_TOL):
        raise ValidationError(f"{name} rows must sum to 1 (max error {err.max():.3g})")


@dataclass(frozen=True)
class Population:
    """Finite context/action universe with a context distribution and features."""

    context_dist: np.ndarray
    context_features: np.ndarray
    num_actions: int

    def __post_init__(self) -> None:
        dist = np.array(self.context_dist, dtype=float, copy=True)
        if dist.ndim != 1 or dist.size == 0:
            raise ValidationError("context_dist must be a non-empty vector")
        _check_simplex_rows(dist, "context_dist")
        dist.setflags(write=False)
        feats = _as_matrix(self.context_features, "context_features")
        if feats.shape[0] != dist.size:
            raise ValidationError(
                f"{dist.size} contexts but {feats.shape[0]} feature vectors"
            )
        if int(self.num_actions) < 1:
            raise ValidationError("num_actions must be >= 1")
        object.__setattr__(self, "context_dist", dist)
        object.__setattr__(self, "context_features", feats)
        object.__setattr__(self, "num_actions", int(self.num_actions))

    @property
    def num_contexts(self) -> int:
        return self.context_dist.size

    @property
    def feature_dim(self) -> int:
        return self.context_features.shape[1]

    @property
    def contexts(self) -> range:
        return range(self.num_contexts)

    @property
    def actions(self) -> range:
        return range(self.num_actions)

    @classmethod
    def uniform(cls, features, num_actions: int) -> "Population":
        features = np.asarray(features, dtype=float)
        n = features.shape[0]
        return cls(np.full(n, 1.0 / n), features, num_actions)

    def to_json(self) -> dict:
        return {
            "context_dist": self.context_dist.tolist(),
            "context_features": self.context_features.tolist(),
            "num_actions": self.num_actions,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Population":
        try:
            return cls(obj["context_dist"], obj["context_features"], obj["num_actions"])
        except KeyError as exc:
            raise ValidationError(f"population file missing key {exc}") from None


@dataclass(frozen=True)
class Policy:
    """Stochastic policy stored as a |S| x |A| row-stochastic matrix."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = _as_matrix(self.probs, "policy")
        _check_simplex_rows(probs, "policy")
        object.__setattr__(self, "probs", probs)

    @property
    def num_contexts(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    def __call__(self, action: int, context: int) -> float:
        return float(self.probs[context, action])

    @classmethod
    def uniform(cls, num_contexts: int, num_actions: int) -> "Policy":
        return cls(np.full((num_contexts, num_actions), 1.0 / num_actions))

    def to_json(self) -> list:
        return self.probs.tolist()

    @classmethod
    def from_json(cls, obj) -> "Policy":
        return cls(obj)


@dataclass(frozen=True)
class LoggedInteraction:
    context: int
    action: int
    reward: float
    behavior_prob: float

    def __post_init__(self) -> None:
        if not self.behavior_prob > 0 or self.behavior_prob > 1:
            raise ValidationError(
                f"behavior_prob must lie in (0, 1], got {self.behavior_prob}"
            )


@dataclass(frozen=True)
class RewardTable:
    """Mean reward r_k(s, a) for one interval."""

    values: np.ndarray
    bounds: tuple[float, float] = DEFAULT_REWARD_BOUNDS

    def __post_init__(self) -> None:
        values = _as_matrix(self.values, "reward table")
        lo, hi = self.bounds
        if values.size and (values.min() < lo or values.max() > hi):
            raise ValidationError(
                f"rewards outside bounds [{lo}, {hi}]: "
                f"range [{values.min():.4g}, {values.max():.4g}]"
            )
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class IntervalDataset:
    """Logged interactions collected during one stationarity interval.

    Columns are stored as read-only arrays; ``samples`` gives the row view.
    """

    interval: int
    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_probs: np.ndarray
    reward_bounds: tuple[float, float] = field(default=DEFAULT_REWARD_BOUNDS, repr=False)

    def __post_init__(self) -> None:
        if int(self.interval) < 0:
            raise ValidationError("interval index must be nonnegative")
        s = np.asarray(self.contexts, dtype=np.int64)
        a = np.asarray(self.actions, dtype=np.int64)
        r = np.asarray(self.rewards, dtype=float)
        p = np.asarray(self.behavior_probs, dtype=float)
        n = s.size
        if n < 1:
            raise ValidationError("a dataset needs at least one sample")
        if s.ndim != 1 or not (a.shape == r.shape == p.shape == s.shape):
            raise ValidationError("dataset columns must be 1-d and of equal length")
        if s.min() < 0 or a.min() < 0:
            raise ValidationError("context/action ids must be nonnegative")
        if not (np.all(p > 0) and np.all(p <= 1)):
            raise ValidationError("behavior probabilities must lie in (0, 1]")
        lo, hi = self.reward_bounds
        if not np.all(np.isfinite(r)) or r.min() < lo or r.max() > hi:
            raise ValidationError(f"rewards must be finite and within [{lo}, {hi}]")
        for arr in (s, a, r, p):
            arr.setflags(write=False)
        object.__setattr__(self, "interval", int(self.interval))
        object.__setattr__(self, "contexts", s)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "behavior_probs", p)

    def __len__(self) -> int:
        return self.contexts.size

    @property
    def n(self) -> int:
        return self.contexts.size

    @property
    def samples(self) -> list[LoggedInteraction]:
        return [
            LoggedInteraction(int(s), int(a), float(r), float(p))
            for s, a, r, p in zip(self.contexts, self.actions, self.rewards, self.behavior_probs)
        ]

    @classmethod
    def from_samples(
        cls, interval: int, samples: Sequence[LoggedInteraction], **kwargs
    ) -> "IntervalDataset":
        if not samples:
            raise ValidationError("a dataset needs at least one sample")
        return cls(
            interval,
            np.array([x.context for x in samples]),
            np.array([x.action for x in samples]),
            np.array([x.reward for x in samples], dtype=float),
            np.array([x.behavior_prob for x in samples], dtype=float),
            **kwargs,
        )

    def check_population(self, pop: Population) -> None:
        if self.contexts.max() >= pop.num_contexts or self.actions.max() >= pop.num_actions:
            raise ValidationError(
                f"dataset for interval {self.interval} references ids outside the population"
            )

    def permuted(self, order: np.ndarray) -> "IntervalDataset":
        return IntervalDataset(
            self.interval,
            self.contexts[order],
            self.actions[order],
            self.rewards[order],
            self.behavior_probs[order],
            self.reward_bounds,
        )


class NonstationaryEnv(Protocol):
    """Piecewise-stationary bandit environment with known change points."""

    population: Population
    num_intervals: int

    def reward_at(self, k: int) -> RewardTable: ...

    def sample(
        self, k: int, policy: Policy, n: int, rng: np.random.Generator
    ) -> IntervalDataset: ...


def sample_interval(
    pop: Population,
    policy: Policy,
    rewards: np.ndarray,
    n: int,
    rng: np.random.Generator,
    interval: int = 0,
    noise=None,
    reward_bounds: tuple[float, float] = DEFAULT_REWARD_BOUNDS,
) -> IntervalDataset:
    """Draw ``n`` logged interactions: s ~ P, a ~ policy(.|s), r = rewards[s, a] (+ noise).

    ``noise`` is an optional callable ``(contexts, actions, rng) -> array``.
    """
    contexts = rng.choice(pop.num_contexts, size=n, p=pop.context_dist)
    cdf = np.cumsum(policy.probs[contexts], axis=1)
    u = rng.random(n)
    actions = np.minimum((u[:, None] > cdf).sum(axis=1), pop.num_actions - 1)
    r = np.asarray(rewards, dtype=float)[contexts, actions]
    if noise is not None:
        r = r + noise(contexts, actions, rng)
    return IntervalDataset(
        interval, contexts, actions, r, policy.probs[contexts, actions], reward_bounds
    )


def _check_dims(pop: Population, policy: Policy, rewards: np.ndarray | None = None) -> None:
    if policy.probs.shape != (pop.num_contexts, pop.num_actions):
        raise ValidationError(
            f"policy shape {policy.probs.shape} does not match population "
            f"({pop.num_contexts}, {pop.num_actions})"
        )
    if rewards is not None and rewards.shape != policy.probs.shape:
        raise ValidationError(f"reward table shape {rewards.shape} does not match policy")


def true_value(pop: Population, target: Policy, rewards: RewardTable | np.ndarray) -> float:
    """Exact J(pi) = sum_s sum_a P(s) pi(a|s) r(s, a)."""
    values = rewards.values if isinstance(rewards, RewardTable) else np.asarray(rewards, float)
    _check_dims(pop, target, values)
    return float(pop.context_dist @ (target.probs * values).sum(axis=1))


def importance_weight(target: Policy, sample: LoggedInteraction) -> float:
    if sample.behavior_prob <= 0:
        raise ValidationError("behavior_prob must be positive")
    return target.probs[sample.context, sample.action] / sample.behavior_prob


def importance_weights(data: IntervalDataset, target: Policy) -> np.ndarray:
    """Vector of pi(a_i|s_i) / pi_b(a_i|s_i) using logged propensities."""
    return target.probs[data.contexts, data.actions] / data.behavior_probs


# --- file formats -----------------------------------------------------------


def read_logged_jsonl(
    stream: IO[str] | Iterable[str],
    reward_bounds: tuple[float, float] = DEFAULT_REWARD_BOUNDS,
) -> dict[int, IntervalDataset]:
    """Parse a JSON-lines log into one dataset per interval."""
    cols: dict[int, list[list]] = {}
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            k = int(obj["interval"])
            row = [int(obj["context"]), int(obj["action"]), float(obj["reward"]),
                   float(obj["behavior_prob"])]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        cols.setdefault(k, []).append(row)
    out = {}
    for k, rows in sorted(cols.items()):
        s, a, r, p = zip(*rows)
        out[k] = IntervalDataset(k, np.array(s), np.array(a), np.array(r), np.array(p),
                                 reward_bounds)
    return out


def iter_logged_jsonl(datasets: Iterable[IntervalDataset]) -> Iterator[str]:
    for d in datasets:
        for s, a, r, p in zip(d.contexts, d.actions, d.rewards, d.behavior_probs):
            yield json.dumps({"interval": d.interval, "context": int(s), "action": int(a),
                              "reward": float(r), "behavior_prob": float(p)})


def load_population(path: str | Path) -> Population:
    return Population.from_json(json.loads(Path(path).read_text()))


def load_policy(path: str | Path) -> Policy:
    return Policy.from_json(json.loads(Path(path).read_text()))
