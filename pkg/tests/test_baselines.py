import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from _instances import make_instance, rel_err
from ppk.baselines import global_gp_posterior, local_gp_posterior
from ppk.data import Dataset, Partition, RegionHyperParams, region_of
from ppk.errors import EmptyRegion

HP = RegionHyperParams(0.9, 1.7, 2.3)


def _dense_global(train, Xt, hp):
    # textbook conditioning of theta(Xt) on y with an explicit joint covariance
    from ppk.gp_core import rbf
    n, m = train.n, len(Xt)
    pts = list(train.X) + list(Xt)
    Ct = np.array([[rbf(a, b, hp.gamma_theta) for b in pts] for a in pts]) + 1e-8 * np.eye(n + m)
    Cf = np.array([[rbf(a, b, hp.gamma_f) for b in train.X] for a in train.X]) + 1e-8 * np.eye(n)
    T = np.diag(train.t.astype(float))
    Vyy = T @ Ct[:n, :n] @ T + Cf + np.eye(n) / hp.s_eps
    Cmy = Ct[n:, :n] @ T
    mean = Cmy @ np.linalg.solve(Vyy, train.y)
    cov = Ct[n:, n:] - Cmy @ np.linalg.solve(Vyy, Cmy.T)
    return mean, cov


def test_untreated_single_sample_leaves_prior():
    train = Dataset([[0.4]], [3.0], [0])
    post = global_gp_posterior(train, [[0.4], [1.0]], HP)
    assert_array_equal(post.mean, [0.0, 0.0])
    assert_allclose(np.diag(post.covariance), 1.0 + 1e-8)


def test_zero_outcomes_give_zero_mean():
    rng = np.random.default_rng(0)
    train = Dataset(rng.standard_normal((10, 2)), np.zeros(10), rng.integers(0, 2, 10))
    assert_array_equal(global_gp_posterior(train, rng.standard_normal((3, 2)), HP).mean, np.zeros(3))


def test_global_matches_dense_conditioning():
    rng = np.random.default_rng(1)
    train = Dataset(rng.standard_normal((25, 3)), rng.standard_normal(25), rng.integers(0, 2, 25))
    Xt = rng.standard_normal((6, 3))
    post = global_gp_posterior(train, Xt, HP)
    mean, cov = _dense_global(train, Xt, HP)
    assert rel_err(post.mean, mean) < 1e-9
    assert rel_err(post.covariance, cov) < 1e-9


def test_local_with_one_region_is_global():
    train, Xt, _, _, hps, _ = make_instance(2, K=2)
    part = Partition(np.empty(0), np.zeros(train.n, int))
    a = local_gp_posterior(train, Xt, np.zeros(len(Xt), int), part, hps[:1])
    b = global_gp_posterior(train, Xt, hps[0])
    assert_allclose(a.mean, b.mean, rtol=1e-14)
    assert_allclose(a.covariance, b.covariance, rtol=1e-14)


def test_local_regions_are_standalone_fits():
    train, Xt, tr, part, hps, _ = make_instance(3, m=12, K=2)
    post = local_gp_posterior(train, Xt, tr, part, hps)
    for k in range(2):
        idx = np.flatnonzero(tr == k)
        ref = global_gp_posterior(train.subset(part.members(k)), Xt[idx], hps[k])
        assert_allclose(post.mean[idx], ref.mean, rtol=1e-13)
        assert_allclose(post.covariance[np.ix_(idx, idx)], ref.covariance, rtol=1e-13)
    # no covariance across regions
    assert np.all(post.covariance[np.ix_(tr == 0, tr == 1)] == 0)


def test_point_on_cutoff_goes_to_upper_region():
    assert_array_equal(region_of([0.4], [0.4]), [1])


def test_local_requires_nonempty_regions():
    train, Xt, tr, part, hps, _ = make_instance(4, K=2)
    bad = Partition(np.array([0.3, 0.6]), part.assignment)  # region 2 is empty
    with pytest.raises(EmptyRegion):
        local_gp_posterior(train, Xt, tr, bad, hps + hps[:1])
