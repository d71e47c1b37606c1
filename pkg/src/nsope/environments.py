"""Synthetic nonstationary environments and multilabel dataset ingestion.

Interval indices run over 0..K (``num_intervals`` = K); estimation starts at
k = 1 so that interval 0 always provides past data.

Reward tables returned by ``reward_at`` are the *expected* rewards of the
interval: per-sample noise drawn by ``sample`` is centered, so the tables are
the ground truth that the estimators target.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .core import (
    DEFAULT_REWARD_BOUNDS,
    IntervalDataset,
    Policy,
    Population,
    RewardTable,
    ValidationError,
    sample_interval,
)
from .rl_ope import FiniteMDP


def softmax(scores: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    if temperature <= 0:
        raise ValidationError("softmax temperature must be positive")
    z = np.asarray(scores, dtype=float) / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _normalize_rows(p: np.ndarray) -> np.ndarray:
    # absorb round-off so rows pass the 1e-12 simplex check
    p = p / p.sum(axis=1, keepdims=True)
    p[:, -1] = 1.0 - p[:, :-1].sum(axis=1)
    return p


def fit_linear_classifier(features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """One-vs-rest least-squares scores: returns W with scores = [1, x] @ W."""
    design = np.hstack([np.ones((features.shape[0], 1)), features])
    w, *_ = np.linalg.lstsq(design, labels.astype(float), rcond=None)
    return w


def classifier_policy(features: np.ndarray, weights: np.ndarray, temperature: float) -> Policy:
    design = np.hstack([np.ones((features.shape[0], 1)), features])
    return Policy(_normalize_rows(softmax(design @ weights, temperature)))


# --- generic tabular bandit env ----------------------------------------------


@dataclass(frozen=True, eq=False)
class TabularBanditEnv:
    """Bandit env given by a reward schedule k -> (|S|, |A|) expected rewards.

    ``sample`` adds centered uniform noise of width ``noise_scale`` on the
    pairs selected by ``noise_mask`` (all pairs when None).
    """

    population: Population
    num_intervals: int
    schedule: object
    target: Policy | None = None
    noise_scale: float = 0.0
    noise_mask: np.ndarray | None = None
    reward_bounds: tuple[float, float] = DEFAULT_REWARD_BOUNDS
    name: str = "bandit"

    def reward_at(self, k: int) -> RewardTable:
        if not 0 <= k <= self.num_intervals:
            raise ValidationError(f"interval {k} outside 0..{self.num_intervals}")
        return RewardTable(self.schedule(k), self.reward_bounds)

    def sample(self, k: int, policy: Policy, n: int, rng: np.random.Generator) -> IntervalDataset:
        return sample_interval(self.population, policy, self.reward_at(k).values, n, rng,
                               interval=k, noise=self._noise if self.noise_scale > 0 else None,
                               reward_bounds=self.reward_bounds)

    def _noise(self, s: np.ndarray, a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        eps = self.noise_scale * (rng.random(s.size) - 0.5)
        return eps if self.noise_mask is None else eps * self.noise_mask[s, a]

    def dump(self) -> dict:
        out = {
            "name": self.name,
            "num_intervals": self.num_intervals,
            "population": self.population.to_json(),
            "reward_tables": [self.reward_at(k).values.tolist()
                              for k in range(self.num_intervals + 1)],
        }
        if self.target is not None:
            out["target_policy"] = self.target.to_json()
        return out


@dataclass(frozen=True, eq=False)
class StationarySchedule:
    values: np.ndarray

    def __call__(self, k: int) -> np.ndarray:
        return self.values


@dataclass(frozen=True, eq=False)
class TableSchedule:
    tables: np.ndarray

    def __call__(self, k: int) -> np.ndarray:
        return self.tables[k]


def env_from_dump(obj: dict) -> TabularBanditEnv:
    """Rebuild a replayable env from a ``dump()`` (rewards become noiseless)."""
    pop = Population.from_json(obj["population"])
    tables = np.asarray(obj["reward_tables"], dtype=float)
    target = Policy(obj["target_policy"]) if "target_policy" in obj else None
    return TabularBanditEnv(pop, len(tables) - 1, TableSchedule(tables), target,
                            name=obj.get("name", "replay"))


# --- sine-wave bandit ---------------------------------------------------------


@dataclass(frozen=True)
class SineBanditConfig:
    num_contexts: int = 200
    num_actions: int = 10
    feature_dim: int = 32
    num_intervals: int = 24
    base: float = 0.5
    amplitude_range: tuple[float, float] = (0.1, 0.5)
    # pairs share a frequency band so J_k itself oscillates; None means (0, pi / K)
    frequency_range: tuple[float, float] | None = (0.6, 1.0)
    noise_scale: float = 0.01
    random_positive_rate: float = 0.01
    random_positive_range: tuple[float, float] = (0.5, 1.0)
    label_rate: float = 0.2
    label_noise: float = 0.5
    target_subset_frac: float = 0.5
    target_temperature: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.noise_scale < 0:
            raise ValidationError("noise_scale must be >= 0")
        if self.num_intervals < 1:
            raise ValidationError("num_intervals must be >= 1")
        if min(self.num_contexts, self.num_actions, self.feature_dim) < 1:
            raise ValidationError("dimensions must be positive")
        for name in ("amplitude_range", "random_positive_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"{name} must satisfy lo <= hi")
        if self.frequency_range is not None and self.frequency_range[0] > self.frequency_range[1]:
            raise ValidationError("frequency_range must satisfy lo <= hi")
        if not 0 <= self.random_positive_rate <= 1 or not 0 < self.label_rate <= 1:
            raise ValidationError("rates must lie in [0, 1]")
        if not 0 < self.target_subset_frac <= 1:
            raise ValidationError("target_subset_frac must lie in (0, 1]")

    @property
    def frequency_bounds(self) -> tuple[float, float]:
        if self.frequency_range is None:
            return (0.0, math.pi / self.num_intervals)
        return tuple(self.frequency_range)


@dataclass(frozen=True, eq=False)
class SineSchedule:
    """r_k = base + amplitude * sin(k * frequency) on positive pairs, 0 elsewhere.

    Each interval also sets a few random pairs to positive random values;
    those draws depend only on (seed, k).
    """

    positive: np.ndarray
    amplitude: np.ndarray
    frequency: np.ndarray
    base: float
    noise_mean: float
    random_positive_rate: float
    random_positive_range: tuple[float, float]
    seed: int

    def wave(self, k: int) -> np.ndarray:
        return np.where(self.positive,
                        self.base + self.amplitude * np.sin(k * self.frequency) + self.noise_mean,
                        0.0)

    def __call__(self, k: int) -> np.ndarray:
        table = self.wave(k)
        if self.random_positive_rate > 0:
            rng = np.random.default_rng([self.seed, 7919, k])
            hit = rng.random(table.shape) < self.random_positive_rate
            vals = rng.uniform(*self.random_positive_range, size=table.shape)
            table = np.where(hit, vals, table)
        return table


def synthetic_labels(features: np.ndarray, num_actions: int, rate: float, noise: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Multilabel targets from noisy linear scores; every row gets >= 1 label."""
    w = rng.normal(size=(features.shape[1], num_actions)) / math.sqrt(features.shape[1])
    scores = features @ w + noise * rng.normal(size=(features.shape[0], num_actions))
    thresh = np.quantile(scores, 1 - rate)
    labels = scores >= thresh
    labels[np.arange(len(labels)), scores.argmax(axis=1)] = True
    return labels


def make_sine_bandit(
    config: SineBanditConfig,
    base: tuple[Population, Policy, np.ndarray] | None = None,
) -> TabularBanditEnv:
    """Sine-wave nonstationary bandit.

    Without ``base``, contexts, features and labels are synthesized and the
    target policy is a softmax over a least-squares classifier trained on a
    subset of contexts. With ``base`` (e.g. from ``supervised_to_bandit``),
    its population, target policy and positive pairs are used.
    """
    rng = np.random.default_rng(config.seed)
    if base is None:
        feats = rng.normal(size=(config.num_contexts, config.feature_dim))
        labels = synthetic_labels(feats, config.num_actions, config.label_rate,
                                  config.label_noise, rng)
        pop = Population.uniform(feats, config.num_actions)
        n_train = max(1, int(round(config.target_subset_frac * config.num_contexts)))
        train = rng.permutation(config.num_contexts)[:n_train]
        w = fit_linear_classifier(feats[train], labels[train])
        target = classifier_policy(feats, w, config.target_temperature)
        positive = labels
    else:
        pop, target, base_rewards = base
        positive = np.asarray(base_rewards) > 0
    lo, hi = config.amplitude_range
    amplitude = rng.uniform(lo, hi, size=positive.shape)
    flo, fhi = config.frequency_bounds
    frequency = rng.uniform(flo, fhi, size=positive.shape)
    schedule = SineSchedule(positive, amplitude, frequency, config.base,
                            config.noise_scale / 2, config.random_positive_rate,
                            tuple(config.random_positive_range), config.seed)
    return TabularBanditEnv(pop, config.num_intervals, schedule, target,
                            config.noise_scale, positive.astype(float), name="sine_bandit")


# --- synthetic ratings --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RatingSchedule:
    base: np.ndarray
    drift: float
    period: np.ndarray
    phase: np.ndarray

    def __call__(self, k: int) -> np.ndarray:
        wave = np.sin(2 * np.pi * k / self.period + self.phase) - np.sin(self.phase)
        return np.clip(self.base + self.drift * wave, 0.0, 5.0)


def make_synthetic_ratings(
    num_users: int,
    num_genres: int,
    K: int,
    seed: int = 0,
    drift: float = 0.5,
    feature_dim: int = 32,
    noise_scale: float = 0.5,
    target_subset_frac: float = 0.2,
    target_temperature: float = 0.5,
) -> TabularBanditEnv:
    """Users x genres average-rating env with smooth per-pair drift in [0, 5].

    Base ratings come from a low-rank factor model; user factors serve as the
    context features.
    """
    if min(num_users, num_genres, feature_dim) < 1 or K < 1:
        raise ValidationError("dimensions and K must be positive")
    if drift < 0 or noise_scale < 0:
        raise ValidationError("drift and noise_scale must be nonnegative")
    rng = np.random.default_rng(seed)
    users = rng.normal(size=(num_users, feature_dim))
    genres = rng.normal(size=(feature_dim, num_genres)) / math.sqrt(feature_dim)
    base = np.clip(3.0 + 0.8 * (users @ genres), 0.5, 4.5)
    period = rng.uniform(K / 2, 3 * K, size=base.shape) if K > 1 else np.ones_like(base)
    phase = rng.uniform(0, 2 * np.pi, size=base.shape)
    schedule = RatingSchedule(base, drift, period, phase)
    pop = Population.uniform(users, num_genres)
    n_train = max(1, int(round(target_subset_frac * num_users)))
    train = rng.permutation(num_users)[:n_train]
    w = fit_linear_classifier(users[train], base[train])
    target = classifier_policy(users, w, target_temperature)
    return TabularBanditEnv(pop, K, schedule, target, noise_scale, None,
                            (-1.0, 6.0), name="synthetic_ratings")


# --- binary tree MDP ----------------------------------------------------------


@dataclass(frozen=True)
class TreeMDPConfig:
    horizon: int = 10
    num_actions: int = 2
    amplitude: float = 0.25
    noise_scale: float = 0.01
    num_intervals: int = 24
    target_temperature: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if self.num_actions != 2:
            raise ValidationError("the binary tree has exactly two actions")
        if self.noise_scale < 0 or self.num_intervals < 1:
            raise ValidationError("invalid noise_scale or num_intervals")


@dataclass(frozen=True, eq=False)
class TreeSchedule:
    """r_k(s, a) = mu + amplitude * sin(k * frequency) on internal states."""

    mu: np.ndarray
    frequency: np.ndarray
    amplitude: float
    internal: np.ndarray
    noise_mean: float

    def __call__(self, k: int) -> np.ndarray:
        table = self.mu + self.amplitude * np.sin(k * self.frequency) + self.noise_mean
        return np.where(self.internal[:, None], table, 0.0)


def tree_size(horizon: int) -> tuple[int, int]:
    """(internal states, leaves) of the depth-H binary tree."""
    return 2**horizon - 1, 2**horizon


def make_tree_mdp(config: TreeMDPConfig) -> FiniteMDP:
    """Binary tree with 1-based heap ids: root 1, child(s, a) = 2 s + a.

    Ids 1..2^H - 1 are the internal (decision) states, 2^H..2^(H+1) - 1 the
    absorbing leaves, and id 0 is an unreachable padding state.
    """
    H = config.horizon
    n_internal, _ = tree_size(H)
    S = 2 ** (H + 1)
    ids = np.arange(S)
    internal = (ids >= 1) & (ids <= n_internal)
    trans = np.tile(ids[:, None], (1, 2))
    trans[internal] = 2 * ids[internal, None] + np.arange(2)
    rng = np.random.default_rng(config.seed)
    mu = rng.uniform(0.0, 1.0, size=(S, 2))
    freq = rng.uniform(0.0, math.pi / config.num_intervals, size=(S, 2))
    schedule = TreeSchedule(mu, freq, config.amplitude, internal, config.noise_scale / 2)
    nu = np.zeros(S)
    nu[1] = 1.0
    return FiniteMDP(S, 2, H, nu, trans, schedule, config.num_intervals, config.noise_scale)


def tree_target_policy(mdp: FiniteMDP, temperature: float = 1.0) -> Policy:
    """Softmax over the optimal Q of the interval-averaged rewards."""
    mean_r = np.mean([mdp.reward_at(k) for k in range(mdp.num_intervals + 1)], axis=0)
    v = np.zeros(mdp.num_states)
    for _ in range(mdp.horizon):
        q = mean_r + mdp.expected_next_value(v)
        v = q.max(axis=1)
    return Policy(_normalize_rows(softmax(q, temperature)))


# --- multilabel sparse format ---------------------------------------------------


class ParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class MultilabelRecord:
    labels: frozenset[int]
    features: tuple[tuple[int, float], ...]


_LABELS = re.compile(r"^\d+(,\d+)*$")


def parse_multilabel(stream: IO[str] | Iterable[str] | str) -> list[MultilabelRecord]:
    """Parse ``l1,l2,... i1:v1 i2:v2 ...`` lines (labels may be empty)."""
    if isinstance(stream, str):
        stream = stream.splitlines()
    records = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        tokens = line.split(" ")
        head, rest = tokens[0], [t for t in tokens[1:] if t]
        if head == "":
            labels: frozenset[int] = frozenset()
        elif ":" in head:
            raise ParseError(lineno, "labels must precede features")
        elif not _LABELS.match(head):
            raise ParseError(lineno, f"malformed label list {head!r}")
        else:
            labels = frozenset(int(x) for x in head.split(","))
        feats = []
        prev = -1
        for tok in rest:
            idx, sep, val = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                i, v = int(idx), float(val)
            except ValueError:
                raise ParseError(lineno, f"malformed index:value token {tok!r}") from None
            if i < 0 or not math.isfinite(v):
                raise ParseError(lineno, f"invalid feature {tok!r}")
            if i <= prev:
                raise ParseError(lineno, "feature indices must be strictly increasing")
            prev = i
            feats.append((i, v))
        records.append(MultilabelRecord(labels, tuple(feats)))
    return records


def serialize_multilabel(records: Iterable[MultilabelRecord]) -> str:
    lines = []
    for rec in records:
        head = ",".join(str(x) for x in sorted(rec.labels))
        body = " ".join(f"{i}:{v!r}" for i, v in rec.features)
        lines.append(f"{head} {body}".rstrip() if body else head)
    return "".join(line + "\n" for line in lines)


def densify(records: Sequence[MultilabelRecord], dim: int | None = None) -> np.ndarray:
    if dim is None:
        dim = 1 + max((i for r in records for i, _ in r.features), default=-1)
    x = np.zeros((len(records), dim))
    for row, rec in enumerate(records):
        for i, v in rec.features:
            if i < dim:
                x[row, i] = v
    return x


def supervised_to_bandit(
    records: Sequence[MultilabelRecord],
    num_actions: int,
    target_subset_frac: float = 0.1,
    seed: int = 0,
    feature_dim: int | None = None,
    temperature: float = 1.0,
) -> tuple[Population, Policy, np.ndarray]:
    """Turn a multilabel dataset into (population, target policy, base rewards).

    Contexts are the records (uniform P), r(s, a) = 1 when a is a label of s.
    The target policy is the softmax of a one-vs-rest least-squares
    classifier fit on a random ``target_subset_frac`` of the records.
    """
    if not records:
        raise ValidationError("no records to convert")
    labels = np.zeros((len(records), num_actions), dtype=bool)
    for row, rec in enumerate(records):
        for a in rec.labels:
            if not 0 <= a < num_actions:
                raise ValidationError(f"label {a} outside action range 0..{num_actions - 1}")
            labels[row, a] = True
    feats = densify(records, feature_dim)
    rng = np.random.default_rng(seed)
    n_train = max(1, int(round(target_subset_frac * len(records))))
    train = rng.permutation(len(records))[:n_train]
    w = fit_linear_classifier(feats[train], labels[train])
    target = classifier_policy(feats, w, temperature)
    return Population.uniform(feats, num_actions), target, labels.astype(float)


def config_to_json(config) -> dict:
    return asdict(config)
