"""Brute-force dense posterior used to check the structured solvers.

Every latent variable is written as a linear combination of point
evaluations of the underlying region processes (``theta^k`` and ``f^k``),
and the joint covariance is filled in from that representation alone:
``Cov(sum_a c_a g_a(x_a), sum_b d_b h_b(z_b)) = sum_{a,b} c_a d_b [g_a is h_b] k_g(x_a, z_b)``.
Nothing here uses the case tables of the engine.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .data import Dataset, Partition, RegionHyperParams
from .engine import PosteriorHTE
from .errors import CapExceeded
from .linalg import BASE_JITTER
from .pseudo import PseudoSet


def _linear_functionals(train, X_test, test_regions, partition, pseudo, K):
    """Per variable: process ids (2,), points (2, p), coefficients (2,)."""
    p = train.p
    procs, pts, coefs = [], [], []

    def add(terms):
        terms = list(terms) + [(0, np.zeros(p), 0.0)] * (2 - len(terms))
        procs.append([t[0] for t in terms])
        pts.append([t[1] for t in terms])
        coefs.append([t[2] for t in terms])

    # process id k -> theta^k, K + k -> f^k
    for x, r in zip(train.X, partition.assignment):
        add([(int(r), x, 1.0)])
    for x, r in zip(X_test, test_regions):
        add([(int(r), x, 1.0)])
    for x, r in zip(train.X, partition.assignment):
        add([(K + int(r), x, 1.0)])
    if K > 1:
        for x, b in zip(pseudo.points, pseudo.boundary_index):
            add([(int(b), x, 1.0), (int(b) + 1, x, -1.0)])
    return np.array(procs), np.array(pts), np.array(coefs)


def dense_oracle_posterior(train: Dataset, X_test, test_regions, partition: Partition,
                           hyperparams: list[RegionHyperParams], pseudo: PseudoSet | None, *,
                           jitter: float = BASE_JITTER, cap: int = 500) -> PosteriorHTE:
    """Gaussian conditioning on the explicitly assembled joint covariance."""
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    test_regions = np.asarray(test_regions).reshape(-1)
    K = partition.K
    n, m = train.n, X_test.shape[0]
    nd = 0 if K == 1 else pseudo.points.shape[0]
    total = 3 * n + m + nd
    if total > cap:
        raise CapExceeded(f"joint dimension {total} exceeds cap {cap}")

    procs, pts, coefs = _linear_functionals(train, X_test, test_regions, partition, pseudo, K)
    gammas = np.array([hp.gamma_theta for hp in hyperparams] + [hp.gamma_f for hp in hyperparams])
    q = procs.shape[0]
    cov = np.zeros((q, q))
    for a in range(2):
        for b in range(2):
            same = procs[:, a][:, None] == procs[:, b][None, :]
            diff = pts[:, a][:, None, :] - pts[:, b][None, :, :]
            sq = np.sum(diff * diff, axis=-1)
            kern = np.exp(-gammas[procs[:, a]][:, None] * sq)
            cov += coefs[:, a][:, None] * coefs[:, b][None, :] * same * kern
    cov += jitter * np.eye(q)

    # y_i = t_i theta_n[i] + f_n[i] + eps_i
    E = np.zeros((n, q))
    E[np.arange(n), np.arange(n)] = train.t
    E[np.arange(n), n + m + np.arange(n)] = 1.0
    noise = np.array([1.0 / hyperparams[r].s_eps for r in partition.assignment])
    full = np.block([[cov, cov @ E.T], [E @ cov, E @ cov @ E.T + np.diag(noise)]])

    m_idx = np.arange(n, n + m)
    d_idx = np.concatenate([np.arange(2 * n + m, q), np.arange(q, q + n)])
    D = np.concatenate([np.zeros(nd), train.y])
    S_DD = full[np.ix_(d_idx, d_idx)]
    S_mD = full[np.ix_(m_idx, d_idx)]
    fac = sla.cho_factor(S_DD, lower=True)
    mean = S_mD @ sla.cho_solve(fac, D)
    post = full[np.ix_(m_idx, m_idx)] - S_mD @ sla.cho_solve(fac, S_mD.T)
    return PosteriorHTE(mean, 0.5 * (post + post.T))
