from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsope.forecast import cosine_basis, fit_forecast, predict


def test_constant_series():
    m = fit_forecast([(t, 0.7) for t in range(1, 10)], d=5, time_normalizer=24)
    assert predict(m, 10) == pytest.approx(0.7, abs=1e-9)
    assert predict(m, 40) == pytest.approx(0.7, abs=1e-9)


def test_realizable_cosine():
    K = 24
    series = [(t, np.cos(2 * np.pi * (t / K) * 2)) for t in range(1, 15)]
    m = fit_forecast(series, d=3, time_normalizer=K)
    for t in (15, 16, 30):
        assert m.predict(t) == pytest.approx(np.cos(2 * np.pi * (t / K) * 2), abs=1e-8)


def test_recovers_weights():
    K = 24
    t = np.arange(1, 21)
    y = 3 + 0.5 * np.cos(2 * np.pi * t / K)
    m = fit_forecast(list(zip(t, y)), d=5, time_normalizer=K)
    assert np.allclose(m.weights, [3, 0.5, 0, 0, 0], atol=1e-6)
    # independent least squares route
    w, *_ = np.linalg.lstsq(cosine_basis(t, 5, K), y, rcond=None)
    assert np.allclose(m.weights, w, atol=1e-9)


def test_basis_needs_normalization():
    # without dividing time, every integer time maps to the all-ones vector
    assert np.allclose(cosine_basis(np.arange(1, 6), 4, 1.0), 1.0)
    assert cosine_basis(0.5, 3, 1.0) == pytest.approx(np.array([[1.0, -1.0, 1.0]]))


def test_underdetermined_fit_uses_ridge():
    m = fit_forecast([(1, 2.0), (2, 2.5)], d=5, time_normalizer=24)
    assert np.all(np.isfinite(m.weights))
    assert m.predict(1) == pytest.approx(2.0, abs=1e-5)
    single = fit_forecast([(3, 1.5)], d=5, time_normalizer=24)
    assert single.predict(3) == pytest.approx(1.5, abs=1e-5)


def test_default_normalizer_and_errors():
    m = fit_forecast([(1, 1.0), (4, 2.0)], d=1)
    assert m.time_normalizer == 4.0
    with pytest.raises(ValueError):
        fit_forecast([])
    with pytest.raises(ValueError):
        fit_forecast([(1, 1.0), (1, 2.0)])
    with pytest.raises(ValueError):
        fit_forecast([(1, 1.0)], d=0)


def test_vector_prediction():
    m = fit_forecast([(t, t / 10) for t in range(1, 12)], d=3, time_normalizer=24)
    out = m.predict(np.array([12, 13]))
    assert out.shape == (2,)
    assert out[0] == pytest.approx(m.predict(12))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(-5, 5))
def test_prediction_is_affine_in_targets(seed, a, b):
    rng = np.random.default_rng(seed)
    t = np.arange(1, int(rng.integers(6, 25)))
    y = rng.normal(size=t.size)
    m1 = fit_forecast(list(zip(t, y)), 5, 24)
    m2 = fit_forecast(list(zip(t, a + b * y)), 5, 24)
    tf = t[-1] + 1
    assert m2.predict(tf) == pytest.approx(a + b * m1.predict(tf), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residuals_orthogonal_to_basis(seed):
    rng = np.random.default_rng(seed)
    t = np.arange(1, int(rng.integers(6, 25)))
    y = rng.normal(size=t.size)
    m = fit_forecast(list(zip(t, y)), 5, 24)
    psi = cosine_basis(t, 5, 24)
    assert np.abs(psi.T @ (y - psi @ m.weights)).max() < 1e-8
