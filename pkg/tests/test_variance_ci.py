from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from nsope.bandit_estimators import (
    PopTotalMode,
    RegCoefficients,
    fit_reg_coefficients,
    is_estimate,
)
from nsope.core import Population, Policy, ValidationError, sample_interval
from nsope.reward_models import FeatureMap
from nsope.variance_ci import (
    EstimateReport,
    Sided,
    build_ci,
    dr_terms,
    exact_variance_oracle,
    g_weights,
    normal_quantile,
    syg_variance,
    var_diff,
    var_dm_model_based,
    var_dr,
    var_is,
    var_reg,
    var_wis,
    z_value,
)

from conftest import dataset, random_problem

PAIR = [(0, 0, 1.0, 0.5), (1, 1, 1.0, 0.5)]


def test_syg_matches_textbook_form():
    rng = np.random.default_rng(0)
    u = rng.normal(size=17)
    n = u.size
    textbook = (np.sum(u**2) - n * u.mean() ** 2) / (n * (n - 1))
    assert syg_variance(u) == pytest.approx(textbook, rel=1e-12)
    assert syg_variance(np.full(5, 2.0)) == 0.0
    with pytest.raises(ValidationError):
        syg_variance(np.array([1.0]))


def test_hand_values_on_fixture_a(fix_a):
    _, target, _, _ = fix_a
    d = dataset(PAIR)
    assert var_is(d, target) == pytest.approx(0.01, abs=1e-15)
    assert var_wis(d, target) == pytest.approx(0.0, abs=1e-15)
    # terms 0.8 and 0.7
    assert var_diff(d, target, np.full((2, 2), 0.5)) == pytest.approx(0.0025, abs=1e-15)


def test_zero_proxy_reduces_to_is(fix_a):
    pop, target, behavior, r = fix_a
    d = sample_interval(pop, behavior, r, 30, np.random.default_rng(0))
    zero = np.zeros((2, 2))
    assert var_diff(d, target, zero) == pytest.approx(var_is(d, target), rel=1e-12)
    assert var_dr(d, target, zero) == pytest.approx(var_is(d, target), rel=1e-12)
    assert var_diff(d, target, r) == 0.0


def test_wis_variance_equal_rewards_and_on_policy(fix_a):
    pop, target, behavior, r = fix_a
    d = sample_interval(pop, behavior, np.full((2, 2), 0.4), 20, np.random.default_rng(1))
    assert var_wis(d, target) == pytest.approx(0.0, abs=1e-15)
    d = sample_interval(pop, behavior, r, 20, np.random.default_rng(2))
    plain = d.rewards.var(ddof=1) / len(d)
    assert var_wis(d, behavior) == pytest.approx(plain, abs=1e-12)


def test_dr_terms_constant_gives_zero():
    target = Policy(np.array([[0.5, 0.5]]))
    d = dataset([(0, 0, 1.0, 0.5), (0, 1, 1.0, 0.5)])
    proxy = np.array([[0.3, 0.3]])
    assert np.allclose(dr_terms(d, target, proxy), 1.0)
    assert var_dr(d, target, proxy) == 0.0


def test_var_reg_special_cases(fix_a):
    pop, target, behavior, _ = fix_a
    proxy = np.array([[0.2, 0.9], [0.5, 0.1]])
    fm = FeatureMap.from_proxy(proxy)
    r = 0.3 - 0.7 * proxy
    d = sample_interval(pop, behavior, r, 25, np.random.default_rng(3))
    assert var_reg(d, target, fm) == pytest.approx(0.0, abs=1e-20)
    assert var_reg(d, target, fm, g_weighted=True, pop=pop) == pytest.approx(0.0, abs=1e-20)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_constant_feature_var_reg_is_var_wis(seed):
    pop, target, _, d, _ = random_problem(seed)
    if len(d) < 2:
        return
    S, A = target.probs.shape
    assert var_reg(d, target, FeatureMap.constant(S, A)) == pytest.approx(
        var_wis(d, target), rel=1e-10, abs=1e-14)


def test_g_weights_are_one_when_totals_match():
    # on-policy sample holding every (s, a) once: the HH feature total equals t_x
    pop = Population(np.array([0.5, 0.5]), np.zeros((2, 1)), 2)
    pi = Policy.uniform(2, 2)
    fm = FeatureMap.from_proxy(np.array([[0.2, 0.9], [0.5, 0.1]]))
    d = dataset([(0, 0, 1.0, 0.5), (0, 1, 0.0, 0.5), (1, 0, 0.5, 0.5), (1, 1, 1.0, 0.5)])
    coeffs = fit_reg_coefficients(d, pi, fm)
    g = g_weights(d, pop, pi, fm, coeffs, PopTotalMode.known())
    assert np.allclose(g, 1.0, atol=1e-12)
    plain = var_reg(d, pi, fm, coeffs)
    assert var_reg(d, pi, fm, coeffs, g_weighted=True, pop=pop) == pytest.approx(plain, rel=1e-12)


def test_g_weights_formula(fix_a):
    pop, target, behavior, r = fix_a
    fm = FeatureMap.from_proxy(np.array([[0.2, 0.9], [0.5, 0.1]]))
    d = sample_interval(pop, behavior, r, 40, np.random.default_rng(4))
    coeffs = fit_reg_coefficients(d, target, fm)
    w = target.probs[d.contexts, d.actions] / d.behavior_probs
    phi = fm.table[d.contexts, d.actions]
    t_x = np.array([1.0, pop.context_dist @ (target.probs * fm.table[..., 1]).sum(axis=1)])
    t_hat = (w[:, None] * phi).mean(axis=0)
    m = (w[:, None] * phi).T @ phi / len(d)
    expected = 1 + phi @ np.linalg.solve(m, t_x - t_hat)
    assert np.allclose(g_weights(d, pop, target, fm, coeffs), expected, atol=1e-12)


def test_var_dm_model_based(fix_a):
    pop, target, behavior, r = fix_a
    d = sample_interval(pop, behavior, r, 30, np.random.default_rng(5))
    const = FeatureMap.constant(2, 2)
    # phi = (1): sigma^2 * 1 / n with sigma^2 the sample variance of rewards
    expected = d.rewards.var(ddof=1) / len(d)
    assert var_dm_model_based(d, target, const, pop) == pytest.approx(expected, rel=1e-12)
    saturated = FeatureMap(np.eye(4).reshape(2, 2, 4), "reg_feature")
    assert var_dm_model_based(d, target, saturated, pop) == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(ValidationError):
        var_dm_model_based(dataset(PAIR), target, FeatureMap.from_proxy(r), pop)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_variances_nonnegative_and_permutation_invariant(seed):
    pop, target, _, d, proxy = random_problem(seed)
    p = d.permuted(np.random.default_rng(seed).permutation(len(d)))
    fm = FeatureMap.from_proxy(proxy)
    for f in (
        lambda x: var_is(x, target),
        lambda x: var_wis(x, target),
        lambda x: var_diff(x, target, proxy),
        lambda x: var_dr(x, target, proxy),
        lambda x: var_reg(x, target, fm, fit_reg_coefficients(x, target, fm, 1e-6)),
    ):
        v = f(d)
        assert v >= 0
        assert f(p) == pytest.approx(v, rel=1e-9, abs=1e-14)


def test_normal_quantile_against_scipy():
    for p in np.concatenate([np.geomspace(1e-10, 0.02, 20), np.linspace(0.02, 0.98, 50),
                             1 - np.geomspace(1e-10, 0.02, 20)]):
        assert normal_quantile(p) == pytest.approx(norm.ppf(p), abs=1.2e-8 * max(1, abs(norm.ppf(p))))
    assert z_value(0.025) == pytest.approx(1.959964, abs=1e-6)
    assert z_value(0.05) == pytest.approx(1.644854, abs=1e-6)
    with pytest.raises(ValueError):
        normal_quantile(1.0)


def test_build_ci():
    lo, hi = build_ci(1.0, 0.04, 0.05, "two")
    assert (lo, hi) == pytest.approx((1.0 - 1.959964 * 0.2, 1.0 + 1.959964 * 0.2), abs=1e-6)
    assert build_ci(2.0, 0.0) == (2.0, 2.0)
    lo, hi = build_ci(1.0, 0.04, 0.05, Sided.LOWER)
    assert lo == pytest.approx(1.0 - 1.644854 * 0.2, abs=1e-6) and hi == math.inf
    for alpha in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            build_ci(1.0, 0.1, alpha)
    with pytest.raises(ValueError):
        build_ci(1.0, -0.1)


def test_estimate_report():
    rep = EstimateReport.from_estimate("reg", 3, 0.5, 0.01)
    assert rep.ci_lo <= rep.estimate <= rep.ci_hi
    assert rep.covers(0.6) and not rep.covers(0.8)
    assert rep.width == pytest.approx(2 * 1.959964 * 0.1, abs=1e-6)
    nan = EstimateReport.from_estimate("reg", 3, 0.5, math.nan)
    assert math.isnan(nan.ci_lo)
    with pytest.raises(ValidationError):
        EstimateReport("reg", 1, 0.5, -1.0, 0.0, 1.0)


def test_exact_variance_oracle(fix_a):
    pop, target, behavior, r = fix_a
    # sum y^2 / p = 1.1525 and t_y^2 = 0.825^2
    assert exact_variance_oracle(pop, target, behavior, r) == pytest.approx(0.471875, abs=1e-15)
    assert exact_variance_oracle(pop, target, behavior, r, n=2) == pytest.approx(0.471875 / 2)
    assert exact_variance_oracle(pop, target, behavior, lambda s, a: 0.0) == 0.0
    assert exact_variance_oracle(pop, target, behavior, lambda s, a: r[s, a]) == pytest.approx(0.471875)
    blocked = Policy(np.array([[0.0, 1.0], [0.5, 0.5]]))
    with pytest.raises(ValidationError):
        exact_variance_oracle(pop, target, blocked, r)


def test_enumerated_variance_matches_brute_force(fix_a):
    """Lemma-style formula vs direct enumeration of the single-draw distribution."""
    pop, target, behavior, r = fix_a
    p = pop.context_dist[:, None] * behavior.probs
    y = pop.context_dist[:, None] * target.probs * r
    vals = (y / p).ravel()
    mean = (p.ravel() * vals).sum()
    assert (p.ravel() * (vals - mean) ** 2).sum() == pytest.approx(
        exact_variance_oracle(pop, target, behavior, r), abs=1e-15)
    assert mean == pytest.approx(0.825)
    assert is_estimate(dataset(PAIR), target) == 1.5


def test_var_reg_with_fixed_coefficients(fix_a):
    pop, target, behavior, r = fix_a
    proxy = np.array([[0.2, 0.9], [0.5, 0.1]])
    fm = FeatureMap.from_proxy(proxy)
    d = sample_interval(pop, behavior, r, 30, np.random.default_rng(6))
    got = var_reg(d, target, fm, RegCoefficients.fixed([0, 1]))
    assert got == pytest.approx(var_diff(d, target, proxy), rel=1e-12)
