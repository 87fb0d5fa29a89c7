import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import expit, logit

from ppk.errors import Separation, SingleClass, ZeroCoefficient
from ppk.propensity import (
    PropensityModel,
    clip_scores,
    fit_logistic,
    predict_propensity,
    solve_adjusted_coordinate,
)


def test_recovers_generating_coefficient():
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, size=(5000, 1))
    t = (rng.uniform(size=5000) < expit(x[:, 0])).astype(int)
    model = fit_logistic(x, t)
    assert abs(model.coefficients[0] - 1.0) < 0.15
    assert abs(model.intercept) < 0.15


def test_no_signal_column():
    t = np.array([1, 0, 1, 1] * 10)
    model = fit_logistic(np.zeros((40, 1)), t)
    assert_allclose(model.intercept, logit(0.75), atol=1e-6)
    assert abs(model.coefficients[0]) < 1e-6


def test_matches_score_equation():
    # at the optimum the gradient Z'(t - mu) vanishes
    rng = np.random.default_rng(3)
    X = rng.standard_normal((300, 3))
    t = (rng.uniform(size=300) < expit(X @ [0.5, -1.0, 0.2] + 0.3)).astype(int)
    model = fit_logistic(X, t)
    Z = np.hstack([np.ones((300, 1)), X])
    grad = Z.T @ (t - expit(model.linear_predictor(X)))
    assert np.max(np.abs(grad)) < 1e-6


def test_fit_errors():
    with pytest.raises(SingleClass):
        fit_logistic(np.random.default_rng(0).standard_normal((10, 1)), np.ones(10))
    x = np.linspace(-1, 1, 20)[:, None]
    with pytest.raises(Separation):
        fit_logistic(x, (x[:, 0] > 0).astype(int))


def test_predict_examples():
    assert predict_propensity(PropensityModel(0.0, np.zeros(2)), [3.0, -7.0]) == 0.5
    assert predict_propensity(PropensityModel(0.0, np.array([2.0, 1.0])), [-0.2, 0.4]) == 0.5
    assert_allclose(predict_propensity(PropensityModel(1.0, np.zeros(1)), [0.0]), 0.7310585786300049)
    p = predict_propensity(PropensityModel(0.0, np.array([1.0])), [1e4])
    assert 0 < p < 1


def test_clip_scores():
    assert_allclose(clip_scores([0.0, 0.5, 1.0]), [1e-6, 0.5, 1 - 1e-6])


def test_adjusted_coordinate_examples():
    model = PropensityModel(0.0, np.array([2.0, 1.0]))
    assert_allclose(solve_adjusted_coordinate(model, [np.nan, 0.4], 0, 0.5), -0.2, atol=1e-15)
    with pytest.raises(ZeroCoefficient):
        solve_adjusted_coordinate(PropensityModel(0.0, np.array([1.0, 0.0])), [0.1, 0.0], 1, 0.3)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-3, 3),
    st.lists(st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3), min_size=1, max_size=5),
    st.floats(0.02, 0.98),
    st.integers(0, 4),
    st.integers(0, 2**32 - 1),
)
def test_round_trip(b0, coef, target, j, seed):
    coef = np.array(coef)
    j = j % coef.size
    x = np.random.default_rng(seed).standard_normal(coef.size)
    model = PropensityModel(b0, coef)
    x[j] = solve_adjusted_coordinate(model, x, j, target)
    assert abs(predict_propensity(model, x) - target) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 3), st.floats(-2, 2), st.floats(1e-3, 1.0))
def test_monotone_in_positive_coordinate(c, x0, dx):
    model = PropensityModel(0.1, np.array([c, -0.5]))
    assert predict_propensity(model, [x0 + dx, 0.3]) > predict_propensity(model, [x0, 0.3])
