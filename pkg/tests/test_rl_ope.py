from __future__ import annotations

import io
import itertools

import numpy as np
import pytest

from nsope.bandit_estimators import PopTotalMode, is_estimate
from nsope.core import IntervalDataset, Policy, ValidationError
from nsope.environments import TreeMDPConfig, make_tree_mdp, tree_target_policy
from nsope.rl_ope import (
    FiniteMDP,
    QTable,
    Trajectory,
    TrajectoryDataset,
    exact_value,
    fqe,
    iter_trajectories_jsonl,
    pdis,
    read_trajectories_jsonl,
    reg_fqe,
    reg_fqe_estimate,
    sample_trajectories,
    trajectory_is,
    trajectory_wis,
    var_pdis,
    var_trajectory_is,
)
from nsope.variance_ci import syg_variance


def const_rewards(table):
    table = np.asarray(table, dtype=float)
    return lambda k: table


def loop_mdp(values=(1.0, 2.0, 4.0), H=3):
    """Initial states that loop on themselves with an action-independent reward."""
    S = len(values)
    trans = np.tile(np.arange(S)[:, None], (1, 2))
    rewards = np.repeat(np.asarray(values)[:, None], 2, axis=1)
    return FiniteMDP(S, 2, H, np.full(S, 1.0 / S), trans, const_rewards(rewards))


def enumerate_value(mdp, policy, k=0):
    """J by summing over every action sequence from every initial state."""
    total = 0.0
    r = mdp.reward_at(k)
    for s0 in np.flatnonzero(mdp.initial_dist):
        for acts in itertools.product(range(mdp.num_actions), repeat=mdp.horizon):
            s, prob, ret = s0, mdp.initial_dist[s0], 0.0
            for a in acts:
                prob *= policy.probs[s, a]
                ret += r[s, a]
                s = mdp.transition[s, a]
            total += prob * ret
    return total


def test_horizon_one_matches_bandit_is():
    rng = np.random.default_rng(0)
    s = rng.integers(0, 3, 20)
    a = rng.integers(0, 2, 20)
    r = rng.uniform(size=20)
    p = np.full(20, 0.5)
    target = Policy(rng.dirichlet([1, 1], size=3))
    traj = TrajectoryDataset(0, s[:, None], a[:, None], r[:, None], p[:, None])
    bandit = IntervalDataset(0, s, a, r, p)
    assert trajectory_is(traj, target) == pytest.approx(is_estimate(bandit, target), abs=1e-15)
    assert pdis(traj, target) == pytest.approx(trajectory_is(traj, target), abs=1e-15)


def test_on_policy_gives_mean_return():
    traj = TrajectoryDataset(0, [[0, 1], [1, 0]], [[0, 1], [1, 1]], [[1.0, 2.0], [0.0, 0.5]],
                             [[0.5, 0.5], [0.5, 0.5]])
    uniform = Policy.uniform(2, 2)
    assert trajectory_is(traj, uniform) == pytest.approx(1.75)
    assert pdis(traj, uniform) == pytest.approx(1.75)


def test_hand_product_example():
    # step ratios 2 and 0.5, return 3
    target = Policy(np.array([[1.0, 0.0], [0.25, 0.75]]))
    traj = TrajectoryDataset(0, [[0, 1]], [[0, 0]], [[1.0, 2.0]], [[0.5, 0.5]])
    assert np.allclose(traj.step_ratios(target), [[2.0, 0.5]])
    assert trajectory_is(traj, target) == pytest.approx(3.0)
    assert trajectory_wis(traj, target) == pytest.approx(3.0)


def test_pdis_first_step_only():
    target = Policy(np.array([[1.0, 0.0], [0.0, 1.0]]))
    traj = TrajectoryDataset(0, [[0, 1], [0, 0]], [[0, 0], [0, 1]], [[1.0, 0.0], [3.0, 0.0]],
                             [[0.5, 0.5], [0.5, 0.5]])
    # first-step ratios are 2 and 2; later ratios must not matter
    assert pdis(traj, target) == pytest.approx((2 * 1.0 + 2 * 3.0) / 2)


def test_trajectory_validation():
    with pytest.raises(ValidationError):
        TrajectoryDataset(0, [[0, 1]], [[0]], [[1.0]], [[0.5]])
    with pytest.raises(ValidationError):
        TrajectoryDataset(0, [[0]], [[0]], [[1.0]], [[0.0]])
    with pytest.raises(ValidationError):
        FiniteMDP(2, 2, 0, np.array([1.0, 0.0]), np.zeros((2, 2), int), const_rewards(np.zeros((2, 2))))
    with pytest.raises(ValidationError):
        FiniteMDP(2, 2, 1, np.array([1.0, 0.0]), np.full((2, 2), 5), const_rewards(np.zeros((2, 2))))


def test_exact_value_matches_enumeration():
    mdp = make_tree_mdp(TreeMDPConfig(horizon=3, num_intervals=4, seed=3))
    pi = tree_target_policy(mdp)
    for k in (0, 2, 4):
        assert exact_value(mdp, k, pi) == pytest.approx(enumerate_value(mdp, pi, k), abs=1e-12)


def test_stochastic_transitions_exact_value():
    trans = np.zeros((2, 2, 2))
    trans[:, :, 0] = 0.3
    trans[:, :, 1] = 0.7
    mdp = FiniteMDP(2, 2, 2, np.array([1.0, 0.0]), trans, const_rewards([[1.0, 0.0], [2.0, 2.0]]))
    pi = Policy.uniform(2, 2)
    # step 0 from s0: 0.5, step 1: 0.3 * 0.5 + 0.7 * 2
    assert exact_value(mdp, 0, pi) == pytest.approx(0.5 + 0.15 + 1.4)
    d = sample_trajectories(mdp, 0, pi, 20000, np.random.default_rng(0))
    assert d.returns.mean() == pytest.approx(2.05, abs=0.03)


def test_fqe_recovers_exact_values_with_full_coverage():
    mdp = make_tree_mdp(TreeMDPConfig(horizon=3, noise_scale=0.0, seed=1))
    pi = tree_target_policy(mdp)
    d = sample_trajectories(mdp, 0, Policy.uniform(mdp.num_states, 2), 4000, np.random.default_rng(1))
    q = fqe([d], pi, mdp)
    assert mdp.initial_dist @ q.value(pi, 0) == pytest.approx(exact_value(mdp, 0, pi), abs=1e-8)


def test_fqe_horizon_one_and_unseen_pairs():
    traj = TrajectoryDataset(0, [[0], [0], [1]], [[0], [0], [0]], [[1.0], [3.0], [5.0]],
                             [[0.5]] * 3)
    q = fqe([traj], Policy.uniform(3, 2), (3, 2, 1))
    assert q.q[0, 0, 0] == 2.0 and q.q[0, 1, 0] == 5.0
    assert q.q[0, 0, 1] == 0.0 and q.q[0, 2, 0] == 0.0
    with pytest.raises(ValidationError):
        fqe([], Policy.uniform(3, 2), (3, 2, 1))


def test_reg_fqe_constant_feature_is_wis():
    mdp = make_tree_mdp(TreeMDPConfig(horizon=4, seed=2))
    pi = tree_target_policy(mdp)
    d = sample_trajectories(mdp, 0, Policy.uniform(mdp.num_states, 2), 50, np.random.default_rng(2))
    res = reg_fqe(d, mdp, pi, None, g_weighted=False)
    assert res.estimate == pytest.approx(trajectory_wis(d, pi), abs=1e-10)
    assert res.constant_fallback
    w = d.trajectory_weights(pi)
    assert res.var_hat == pytest.approx(syg_variance(w * (d.returns - res.estimate)), rel=1e-10)


def test_reg_fqe_single_root_falls_back():
    mdp = make_tree_mdp(TreeMDPConfig(horizon=3, seed=4))
    pi = tree_target_policy(mdp)
    beh = Policy.uniform(mdp.num_states, 2)
    past = sample_trajectories(mdp, 0, beh, 30, np.random.default_rng(3))
    d = sample_trajectories(mdp, 1, beh, 30, np.random.default_rng(4))
    res = reg_fqe(d, mdp, pi, fqe([past], pi, mdp))
    assert res.constant_fallback
    assert res.estimate == pytest.approx(trajectory_wis(d, pi), abs=1e-10)


def test_reg_fqe_single_root_total_term():
    mdp = make_tree_mdp(TreeMDPConfig(horizon=3, seed=4))
    pi = tree_target_policy(mdp)
    beh = Policy.uniform(mdp.num_states, 2)
    q = fqe([sample_trajectories(mdp, 0, beh, 30, np.random.default_rng(5))], pi, mdp)
    d = sample_trajectories(mdp, 1, beh, 30, np.random.default_rng(6))
    v_root = q.value(pi, 0)[1]
    w = d.trajectory_weights(pi)
    beta = (0.2, 0.9)
    expected = beta[0] + beta[1] * v_root + np.mean(w * (d.returns - beta[0] - beta[1] * v_root))
    assert reg_fqe_estimate(d, mdp, pi, q, beta=beta) == pytest.approx(expected, abs=1e-12)


def test_reg_fqe_exact_proxy_gives_truth():
    mdp = loop_mdp()
    pi = Policy(np.array([[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]]))
    beh = Policy.uniform(3, 2)
    exact = QTable(np.stack([np.repeat([[1.0], [2.0], [4.0]], 2, axis=1) * (3 - h)
                             for h in range(3)]))
    d = sample_trajectories(mdp, 0, beh, 25, np.random.default_rng(7))
    truth = exact_value(mdp, 0, pi)
    assert reg_fqe_estimate(d, mdp, pi, exact, beta=(0.0, 1.0)) == pytest.approx(truth, abs=1e-12)
    fitted = reg_fqe(d, mdp, pi, exact)
    assert not fitted.constant_fallback
    assert fitted.estimate == pytest.approx(truth, abs=1e-10)
    assert fitted.var_hat == pytest.approx(0.0, abs=1e-18)
    for mode in (PopTotalMode.same_sample(), PopTotalMode.independent(
            IntervalDataset(0, np.array([0, 1, 2, 2]), np.zeros(4, int), np.zeros(4), np.full(4, 0.5)))):
        assert np.isfinite(reg_fqe(d, mdp, pi, exact, mode).estimate)


def test_rl_variances():
    traj = TrajectoryDataset(0, [[0, 1], [0, 0], [1, 1]], [[0, 0], [0, 1], [1, 0]],
                             [[1.0, 2.0], [0.0, 1.0], [2.0, 0.5]], [[0.5, 0.5]] * 3)
    pi = Policy(np.array([[0.7, 0.3], [0.4, 0.6]]))
    w = traj.trajectory_weights(pi)
    assert var_trajectory_is(traj, pi) == pytest.approx(syg_variance(w * traj.returns))
    cum = np.cumprod(traj.step_ratios(pi), axis=1)
    assert var_pdis(traj, pi) == pytest.approx(syg_variance((cum * traj.rewards).sum(axis=1)))


def test_sampling_is_deterministic_and_uses_logged_probs():
    mdp = make_tree_mdp(TreeMDPConfig(horizon=3, seed=0))
    beh = Policy.uniform(mdp.num_states, 2)
    a = sample_trajectories(mdp, 2, beh, 10, np.random.default_rng(5))
    b = sample_trajectories(mdp, 2, beh, 10, np.random.default_rng(5))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.rewards, b.rewards)
    assert np.all(a.behavior_probs == 0.5)
    assert np.all(a.states[:, 0] == 1)
    assert np.array_equal(a.states[:, 1], 2 * a.states[:, 0] + a.actions[:, 0])


def test_trajectory_jsonl_round_trip():
    d = TrajectoryDataset(3, [[0, 1]], [[1, 0]], [[0.25, 1.5]], [[0.5, 0.5]])
    text = "\n".join(iter_trajectories_jsonl([d])) + "\n"
    back = read_trajectories_jsonl(io.StringIO(text))
    assert list(back) == [3]
    assert back[3].trajectories == [Trajectory(((0, 1, 0.25, 0.5), (1, 0, 1.5, 0.5)))]
    assert back[3].trajectories[0].ret == 1.75
    with pytest.raises(ValidationError, match="line 1"):
        read_trajectories_jsonl(io.StringIO('{"interval": 0}\n'))
