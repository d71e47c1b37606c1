"""Finite-horizon MDPs and trajectory-level off-policy estimators.

Each trajectory is one sampled unit. Trajectory IS is the Hansen-Hurwitz
estimator over trajectories; PDIS splits the return by step; Reg-FQE uses
the FQE value of the initial state as the proxy, with coefficients fitted
by importance-weighted least squares on the current interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, IO, Iterable, Iterator

import json
import numpy as np

from .bandit_estimators import PopTotal, PopTotalMode
from .core import DEFAULT_REWARD_BOUNDS, Policy, ValidationError
from .smalllinalg import SingularDesign, solve_ridge, solve_spd
from .variance_ci import syg_variance


@dataclass(frozen=True, eq=False)
class FiniteMDP:
    """Finite-horizon MDP whose reward table may change between intervals.

    ``transition`` is either an integer (S, A) next-state table for
    deterministic dynamics or an (S, A, S) probability tensor.
    """

    num_states: int
    num_actions: int
    horizon: int
    initial_dist: np.ndarray
    transition: np.ndarray
    reward_fn: Callable[[int], np.ndarray]
    num_intervals: int = 1
    noise_scale: float = 0.0
    reward_bounds: tuple[float, float] = DEFAULT_REWARD_BOUNDS

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        nu = np.asarray(self.initial_dist, dtype=float)
        if nu.shape != (self.num_states,) or np.any(nu < 0) or abs(nu.sum() - 1) > 1e-12:
            raise ValidationError("initial_dist must be a simplex vector over states")
        trans = np.asarray(self.transition)
        S, A = self.num_states, self.num_actions
        if trans.shape == (S, A) and np.issubdtype(trans.dtype, np.integer):
            if trans.min() < 0 or trans.max() >= S:
                raise ValidationError("transition table references invalid states")
        elif trans.shape == (S, A, S):
            if np.any(trans < 0) or np.abs(trans.sum(axis=2) - 1).max() > 1e-12:
                raise ValidationError("transition rows must be probability vectors")
        else:
            raise ValidationError(f"transition has invalid shape {trans.shape}")
        object.__setattr__(self, "initial_dist", nu)
        object.__setattr__(self, "transition", trans)

    @property
    def deterministic(self) -> bool:
        return self.transition.ndim == 2

    def reward_at(self, k: int) -> np.ndarray:
        return np.asarray(self.reward_fn(k), dtype=float)

    def next_state_matrix(self) -> np.ndarray:
        """(S, A, S) transition probabilities."""
        if not self.deterministic:
            return self.transition
        S = self.num_states
        out = np.zeros((S, self.num_actions, S))
        s_idx, a_idx = np.meshgrid(np.arange(S), np.arange(self.num_actions), indexing="ij")
        out[s_idx, a_idx, self.transition] = 1.0
        return out

    def expected_next_value(self, v: np.ndarray) -> np.ndarray:
        """E[v(s') | s, a] as an (S, A) table."""
        if self.deterministic:
            return v[self.transition]
        return self.transition @ v


@dataclass(frozen=True)
class Trajectory:
    """Sequence of (state, action, reward, behavior_prob) steps."""

    steps: tuple[tuple[int, int, float, float], ...]

    @property
    def ret(self) -> float:
        return float(sum(step[2] for step in self.steps))


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """n trajectories of equal horizon H stored as (n, H) arrays."""

    interval: int
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_probs: np.ndarray

    def __post_init__(self) -> None:
        s = np.atleast_2d(np.asarray(self.states, dtype=np.int64))
        a = np.atleast_2d(np.asarray(self.actions, dtype=np.int64))
        r = np.atleast_2d(np.asarray(self.rewards, dtype=float))
        p = np.atleast_2d(np.asarray(self.behavior_probs, dtype=float))
        if s.size == 0:
            raise ValidationError("a trajectory dataset needs at least one trajectory")
        if not (s.shape == a.shape == r.shape == p.shape):
            raise ValidationError("every trajectory must have exactly H steps")
        if not (np.all(p > 0) and np.all(p <= 1)):
            raise ValidationError("behavior probabilities must lie in (0, 1]")
        if not np.all(np.isfinite(r)):
            raise ValidationError("rewards must be finite")
        for name, arr in zip(("states", "actions", "rewards", "behavior_probs"), (s, a, r, p)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    @property
    def returns(self) -> np.ndarray:
        return self.rewards.sum(axis=1)

    @property
    def initial_states(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def trajectories(self) -> list[Trajectory]:
        return [
            Trajectory(tuple((int(s), int(a), float(r), float(p))
                             for s, a, r, p in zip(*rows)))
            for rows in zip(self.states, self.actions, self.rewards, self.behavior_probs)
        ]

    @classmethod
    def from_trajectories(cls, interval: int, trajs: Iterable[Trajectory]) -> "TrajectoryDataset":
        cols = np.array([[list(step) for step in t.steps] for t in trajs], dtype=float)
        if cols.size == 0:
            raise ValidationError("a trajectory dataset needs at least one trajectory")
        return cls(interval, cols[..., 0].astype(np.int64), cols[..., 1].astype(np.int64),
                   cols[..., 2], cols[..., 3])

    def step_ratios(self, target: Policy) -> np.ndarray:
        return target.probs[self.states, self.actions] / self.behavior_probs

    def trajectory_weights(self, target: Policy) -> np.ndarray:
        return self.step_ratios(target).prod(axis=1)


def sample_trajectories(
    mdp: FiniteMDP, k: int, policy: Policy, n: int, rng: np.random.Generator
) -> TrajectoryDataset:
    """Roll out ``n`` episodes of ``policy`` under the interval-k rewards."""
    table = mdp.reward_at(k)
    H = mdp.horizon
    states = np.empty((n, H), dtype=np.int64)
    actions = np.empty((n, H), dtype=np.int64)
    probs = np.empty((n, H))
    s = rng.choice(mdp.num_states, size=n, p=mdp.initial_dist)
    for h in range(H):
        cdf = np.cumsum(policy.probs[s], axis=1)
        a = np.minimum((rng.random(n)[:, None] > cdf).sum(axis=1), mdp.num_actions - 1)
        states[:, h], actions[:, h], probs[:, h] = s, a, policy.probs[s, a]
        if mdp.deterministic:
            s = mdp.transition[s, a]
        else:
            cdf_s = np.cumsum(mdp.transition[s, a], axis=1)
            s = np.minimum((rng.random(n)[:, None] > cdf_s).sum(axis=1), mdp.num_states - 1)
    rewards = table[states, actions]
    if mdp.noise_scale > 0:
        rewards = rewards + mdp.noise_scale * (rng.random((n, H)) - 0.5)
    return TrajectoryDataset(k, states, actions, rewards, probs)


def exact_value(mdp: FiniteMDP, k: int, policy: Policy) -> float:
    """J_k(pi) by backward induction over the horizon."""
    r = mdp.reward_at(k)
    v = np.zeros(mdp.num_states)
    for _ in range(mdp.horizon):
        q = r + mdp.expected_next_value(v)
        v = (policy.probs * q).sum(axis=1)
    return float(mdp.initial_dist @ v)


def _nonempty(data: TrajectoryDataset) -> None:
    if len(data) == 0:
        raise ValidationError("empty trajectory dataset")


def trajectory_is(data: TrajectoryDataset, target: Policy) -> float:
    _nonempty(data)
    return float(np.mean(data.trajectory_weights(target) * data.returns))


def trajectory_wis(data: TrajectoryDataset, target: Policy) -> float:
    _nonempty(data)
    w = data.trajectory_weights(target)
    if not w.sum() > 0:
        raise ValidationError("all trajectory weights are zero")
    return float(w @ data.returns / w.sum())


def pdis(data: TrajectoryDataset, target: Policy) -> float:
    """Per-decision IS: each reward weighted by the ratios up to its step."""
    _nonempty(data)
    cum = np.cumprod(data.step_ratios(target), axis=1)
    return float((cum * data.rewards).sum(axis=1).mean())


def var_trajectory_is(data: TrajectoryDataset, target: Policy) -> float:
    return syg_variance(data.trajectory_weights(target) * data.returns)


def var_pdis(data: TrajectoryDataset, target: Policy) -> float:
    cum = np.cumprod(data.step_ratios(target), axis=1)
    return syg_variance((cum * data.rewards).sum(axis=1))


@dataclass(frozen=True, eq=False)
class QTable:
    """Per-step action values q[h, s, a] for h = 0..H-1."""

    q: np.ndarray

    def value(self, target: Policy, h: int = 0) -> np.ndarray:
        """V_h(s) = sum_a pi(a|s) Q_h(s, a) for every state."""
        return (target.probs * self.q[h]).sum(axis=1)


def fqe(
    window_data: Iterable[TrajectoryDataset],
    target: Policy,
    mdp_shape: FiniteMDP | tuple[int, int, int],
) -> QTable:
    """Tabular fitted Q evaluation by backward induction over pooled transitions.

    Pairs never visited at a given step keep the value 0.
    """
    window_data = list(window_data)
    if not window_data:
        raise ValidationError("FQE needs at least one dataset")
    if isinstance(mdp_shape, FiniteMDP):
        S, A, H = mdp_shape.num_states, mdp_shape.num_actions, mdp_shape.horizon
    else:
        S, A, H = mdp_shape
    states = np.concatenate([d.states for d in window_data])
    actions = np.concatenate([d.actions for d in window_data])
    rewards = np.concatenate([d.rewards for d in window_data])
    if states.shape[1] != H:
        raise ValidationError("trajectory length does not match the horizon")
    q = np.zeros((H, S, A))
    v_next = np.zeros(S)
    for h in range(H - 1, -1, -1):
        s, a = states[:, h], actions[:, h]
        y = rewards[:, h]
        if h + 1 < H:
            y = y + v_next[states[:, h + 1]]
        total = np.zeros((S, A))
        count = np.zeros((S, A))
        np.add.at(total, (s, a), y)
        np.add.at(count, (s, a), 1.0)
        q[h] = np.divide(total, count, out=np.zeros((S, A)), where=count > 0)
        v_next = (target.probs * q[h]).sum(axis=1)
    return QTable(q)


@dataclass(frozen=True)
class RegFQEResult:
    estimate: float
    var_hat: float
    beta: tuple[float, ...]
    constant_fallback: bool


def _initial_total(mdp: FiniteMDP, phi_all: np.ndarray, mode: PopTotalMode,
                   data: TrajectoryDataset) -> np.ndarray:
    if mode.kind is PopTotal.KNOWN:
        return mdp.initial_dist @ phi_all
    if mode.kind is PopTotal.SAME_SAMPLE:
        return phi_all[data.initial_states].mean(axis=0)
    return phi_all[np.asarray(mode.contexts)].mean(axis=0)


def reg_fqe(
    data: TrajectoryDataset,
    mdp: FiniteMDP,
    target: Policy,
    qtable: QTable | None,
    mode: PopTotalMode | None = None,
    ridge_lambda: float = 0.0,
    g_weighted: bool = True,
    beta=None,
) -> RegFQEResult:
    """Regression-assisted estimate with proxy V_hat(s0) and its variance.

    When phi(s0) = (1, V_hat(s0)) is collinear over the sample (for instance
    a single initial state), the constant feature is used instead, which
    turns the estimator into trajectory-level WIS. ``qtable=None`` requests
    the constant feature directly.
    """
    _nonempty(data)
    mode = mode or PopTotalMode.known()
    n = len(data)
    w = data.trajectory_weights(target)
    ret = data.returns
    s0 = data.initial_states

    fallback = qtable is None
    if not fallback:
        v0 = qtable.value(target, 0)
        phi_all = np.stack([np.ones(mdp.num_states), v0], axis=1)
        if beta is None and np.ptp(v0[s0]) == 0:
            fallback = True
    if fallback:
        phi_all = np.ones((mdp.num_states, 1))
    phi = phi_all[s0]
    gram = (phi * w[:, None]).T @ phi

    if beta is not None:
        coef = np.asarray(beta, dtype=float)
    else:
        rhs = phi.T @ (w * ret)
        try:
            coef = solve_ridge(gram, rhs, ridge_lambda)
        except SingularDesign:
            if fallback:
                raise
            fallback = True
            phi_all = np.ones((mdp.num_states, 1))
            phi = phi_all[s0]
            gram = np.array([[w.sum()]])
            coef = solve_ridge(gram, np.array([w @ ret]), ridge_lambda)

    t_x = _initial_total(mdp, phi_all, mode, data)
    resid = ret - phi @ coef
    estimate = float(t_x @ coef + np.mean(w * resid))
    if n < 2:
        var_hat = float("nan")
    else:
        if g_weighted and beta is None:
            t_hat = (w[:, None] * phi).mean(axis=0)
            resid = resid * (1.0 + phi @ solve_spd(gram / n, t_x - t_hat))
        var_hat = syg_variance(w * resid)
    return RegFQEResult(estimate, var_hat, tuple(float(b) for b in coef), fallback)


def reg_fqe_estimate(
    data: TrajectoryDataset,
    mdp: FiniteMDP,
    target: Policy,
    qtable: QTable | None,
    mode: PopTotalMode | None = None,
    ridge_lambda: float = 0.0,
    beta=None,
) -> float:
    return reg_fqe(data, mdp, target, qtable, mode, ridge_lambda, g_weighted=False,
                   beta=beta).estimate


# --- file format ------------------------------------------------------------


def read_trajectories_jsonl(stream: IO[str] | Iterable[str]) -> dict[int, TrajectoryDataset]:
    by_k: dict[int, list[Trajectory]] = {}
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            steps = tuple((int(st["state"]), int(st["action"]), float(st["reward"]),
                           float(st["behavior_prob"])) for st in obj["steps"])
            by_k.setdefault(int(obj["interval"]), []).append(Trajectory(steps))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    return {k: TrajectoryDataset.from_trajectories(k, t) for k, t in sorted(by_k.items())}


def iter_trajectories_jsonl(datasets: Iterable[TrajectoryDataset]) -> Iterator[str]:
    for d in datasets:
        for t in d.trajectories:
            yield json.dumps({
                "interval": d.interval,
                "steps": [{"state": s, "action": a, "reward": r, "behavior_prob": p}
                          for s, a, r, p in t.steps],
            })
