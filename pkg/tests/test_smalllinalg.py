from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsope.smalllinalg import SingularDesign, inv_spd, solve_ridge, solve_spd


def test_identity_and_diagonal():
    assert np.allclose(solve_spd(np.eye(2), [3, 4]), [3, 4])
    assert np.allclose(solve_spd([[2, 0], [0, 4]], [2, 8]), [1, 2])


def test_rank_one_is_singular():
    with pytest.raises(SingularDesign):
        solve_spd([[1, 1], [1, 1]], [1, 0])
    with pytest.raises(SingularDesign):
        solve_spd(np.zeros((2, 2)), [1, 1])


def test_indefinite_and_asymmetric():
    with pytest.raises(SingularDesign):
        solve_spd([[1, 0], [0, -1]], [1, 1])
    with pytest.raises(ValueError):
        solve_spd([[1, 0.5], [0, 1]], [1, 1])


def test_ridge_examples():
    assert np.allclose(solve_ridge(np.zeros((2, 2)), [1, 1], 1.0), [1, 1])
    a = np.array([[3.0, 1.0], [1.0, 2.0]])
    assert np.array_equal(solve_ridge(a, [1, 2], 0.0), solve_spd(a, [1, 2]))
    # (A + lam I)^-1 b for A = [[1,1],[1,1]], b = (2,2): 2 / (2 + lam) per entry
    x = solve_ridge([[1, 1], [1, 1]], [2, 2], 1e-6)
    assert np.allclose(x, 2 / (2 + 1e-6), rtol=1e-12)
    with pytest.raises(ValueError):
        solve_ridge(np.eye(2), [1, 1], -1.0)


def random_spd(rng, p, cond):
    q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    eig = np.geomspace(1.0, 1.0 / cond, p)
    return (q * eig) @ q.T


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.floats(1.0, 1e6), st.integers(0, 2**32 - 1))
def test_solve_spd_recovers_solution(p, cond, seed):
    rng = np.random.default_rng(seed)
    a = random_spd(rng, p, cond)
    a = 0.5 * (a + a.T)
    x = rng.normal(size=p)
    got = solve_spd(a, a @ x)
    assert np.linalg.norm(got - x) <= 1e-8 * max(1.0, np.linalg.norm(x))
    b = a @ x
    assert np.abs(a @ got - b).max() <= 1e-8 * (1 + np.abs(b).max())


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-4, 10.0), st.integers(0, 2**32 - 1))
def test_ridge_is_continuous_in_lambda(lam, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(4, 3))
    a, b = m.T @ m, rng.normal(size=3)
    x1 = solve_ridge(a, b, lam)
    x2 = solve_ridge(a, b, lam * (1 + 1e-9))
    assert np.linalg.norm(x1 - x2) <= 1e-6 * np.linalg.norm(x1)


def test_inverse():
    a = np.array([[4.0, 1.0], [1.0, 3.0]])
    assert np.allclose(inv_spd(a) @ a, np.eye(2))
