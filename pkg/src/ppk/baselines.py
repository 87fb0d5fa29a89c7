"""Reference estimators: one global partially linear GP, and independent local GPs."""

from __future__ import annotations

import numpy as np

from .data import Dataset, Partition, RegionHyperParams
from .engine import PosteriorHTE
from .errors import DimensionMismatch, EmptyRegion
from .gp_core import gram, outcome_covariance
from .linalg import BASE_JITTER, cho_solve, cholesky


def global_gp_posterior(train: Dataset, X_test, hp: RegionHyperParams,
                        jitter: float = BASE_JITTER) -> PosteriorHTE:
    """Exact GP posterior of ``theta`` at ``X_test`` from all training data.

    ``Cov(y, theta(X_test)) = T C_theta(X, X_test)``, so the effect is only
    learned through treated samples.
    """
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    if X_test.shape[0] == 0:
        return PosteriorHTE(np.zeros(0), np.zeros((0, 0)))
    if X_test.shape[1] != train.p:
        raise DimensionMismatch(f"test covariates have {X_test.shape[1]} columns, expected {train.p}")
    t = train.t.astype(float)
    L = cholesky(outcome_covariance(t, train.X, hp, jitter), kind="region")
    cross = t[:, None] * gram(train.X, X_test, hp.gamma_theta)
    mean = cross.T @ cho_solve(L, train.y)
    prior = gram(X_test, X_test, hp.gamma_theta) + jitter * np.eye(X_test.shape[0])
    cov = prior - cross.T @ cho_solve(L, cross)
    return PosteriorHTE(mean, 0.5 * (cov + cov.T))


def local_gp_posterior(train: Dataset, X_test, test_regions, partition: Partition,
                       hyperparams: list[RegionHyperParams],
                       jitter: float = BASE_JITTER) -> PosteriorHTE:
    """Independent :func:`global_gp_posterior` fits per region, no continuity."""
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    test_regions = np.asarray(test_regions, dtype=np.int64).reshape(-1)
    if test_regions.size != X_test.shape[0]:
        raise DimensionMismatch("one region label per test point required")
    m = X_test.shape[0]
    mean = np.zeros(m)
    cov = np.zeros((m, m))
    for k in range(partition.K):
        members = partition.members(k)
        if members.size == 0:
            raise EmptyRegion(f"region {k} has no training samples")
        idx = np.flatnonzero(test_regions == k)
        if idx.size == 0:
            continue
        post = global_gp_posterior(train.subset(members), X_test[idx], hyperparams[k], jitter)
        mean[idx] = post.mean
        cov[np.ix_(idx, idx)] = post.covariance
    return PosteriorHTE(mean, cov)
