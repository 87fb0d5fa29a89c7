"""RBF kernels, the partially linear GP marginal likelihood and grid-search tuning.

Outcomes in a region are modelled as ``y = t * theta(x) + f(x) + eps`` with
independent zero-mean GP priors on ``theta`` and ``f`` and noise precision
``s_eps``, so ``y ~ N(0, V)`` with ``V = T C_theta T + C_f + I / s_eps``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .data import Dataset, Partition, RegionHyperParams
from .errors import DimensionMismatch, InvalidInput, NotPositiveDefinite, RegionError
from .linalg import BASE_JITTER, cholesky, count_flops, current_counter, logdet_from_cholesky, record_flops

LOG_2PI = math.log(2.0 * math.pi)


def rbf(x, z, gamma: float) -> float:
    """``exp(-gamma * ||x - z||^2)``."""
    d = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    return math.exp(-gamma * float(d @ d))


def sq_dist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, exact zero for identical rows."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    return cdist(A, B, "sqeuclidean")


def gram(A, B, gamma: float) -> np.ndarray:
    """RBF Gram matrix ``K[i, j] = rbf(A[i], B[j], gamma)``."""
    return np.exp(-gamma * sq_dist(A, B))


@dataclass(frozen=True)
class TuningGrid:
    """Arithmetic grid ``min, min + step, ...`` not exceeding ``max``."""

    min: float = 0.1
    max: float = 5.0
    step: float = 0.2

    def __post_init__(self):
        if not (0 < self.min < self.max) or not self.step > 0:
            raise InvalidInput(f"invalid grid {self.min}:{self.max}:{self.step}")

    def values(self) -> np.ndarray:
        count = int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1
        return self.min + self.step * np.arange(count)


SIMULATION_GRID = TuningGrid(0.1, 5.0, 0.2)
REAL_DATA_GRID = TuningGrid(0.1, 10.0, 0.2)


def outcome_covariance(t, X, hp: RegionHyperParams, jitter: float = BASE_JITTER) -> np.ndarray:
    """``V = T (C_theta + jI) T + C_f + jI + I / s_eps`` for one region."""
    t = np.asarray(t, dtype=float)
    D = sq_dist(X, X)
    V = t[:, None] * np.exp(-hp.gamma_theta * D) * t[None, :] + np.exp(-hp.gamma_f * D)
    V[np.diag_indices_from(V)] += jitter * (t**2 + 1.0) + 1.0 / hp.s_eps
    return V


def marginal_loglik(y, t, X, hp: RegionHyperParams, jitter: float = BASE_JITTER) -> float:
    """``log N(y | 0, V)`` evaluated through a Cholesky factor of ``V``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != y.size or np.size(t) != y.size:
        raise DimensionMismatch("y, t and X must have the same number of rows")
    if y.size == 0:
        raise InvalidInput("region is empty")
    L = cholesky(outcome_covariance(t, X, hp, jitter))
    alpha = sla.solve_triangular(L, y, lower=True, check_finite=False)
    return -0.5 * (float(alpha @ alpha) + logdet_from_cholesky(L) + y.size * LOG_2PI)


def loglik_table(y, t, X, theta_values, f_values, s_values,
                 jitter: float = BASE_JITTER) -> np.ndarray:
    """Marginal log-likelihood over the full (gamma_theta, gamma_f, s_eps) product grid.

    For fixed kernel widths ``V(s) = A + I/s`` shares eigenvectors with ``A``,
    so one symmetric eigendecomposition serves the whole noise axis.  Entries
    where ``V`` is not positive definite are ``-inf``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    t = np.asarray(t, dtype=float).reshape(-1)
    m = y.size
    if m == 0:
        raise InvalidInput("region is empty")
    D = sq_dist(X, X)
    noise = 1.0 / np.asarray(s_values, dtype=float)
    nugget = jitter * (t**2 + 1.0)
    f_cache = [np.exp(-g * D) for g in f_values] if m <= 1000 else None
    out = np.empty((len(theta_values), len(f_values), noise.size))
    for a, gt in enumerate(theta_values):
        TCT = t[:, None] * np.exp(-gt * D) * t[None, :]
        for b, gf in enumerate(f_values):
            A = TCT + (f_cache[b] if f_cache is not None else np.exp(-gf * D))
            A[np.diag_indices_from(A)] += nugget
            lam, U = sla.eigh(A, driver="evd", check_finite=False)
            record_flops("eigh", 9.0 * m**3)
            z2 = (U.T @ y) ** 2
            d = lam[None, :] + noise[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                ll = -0.5 * (np.log(d).sum(axis=1) + (z2[None, :] / d).sum(axis=1) + m * LOG_2PI)
            ll[~np.all(d > 0, axis=1)] = -np.inf
            out[a, b] = ll
    return out


def grid_search_region(region: Dataset, grid: TuningGrid = SIMULATION_GRID, *,
                       theta_values=None, f_values=None, s_values=None,
                       tie_tol: float = 1e-15, jitter: float = BASE_JITTER) -> RegionHyperParams:
    """Grid triple maximizing the region's marginal log-likelihood.

    Every hyperparameter uses ``grid`` unless an explicit value list overrides
    it.  Among triples within ``tie_tol`` of the maximum the lexicographically
    smallest ``(gamma_theta, gamma_f, s_eps)`` wins.
    """
    tv = np.asarray(grid.values() if theta_values is None else theta_values, dtype=float)
    fv = np.asarray(grid.values() if f_values is None else f_values, dtype=float)
    sv = np.asarray(grid.values() if s_values is None else s_values, dtype=float)
    table = loglik_table(region.y, region.t, region.X, tv, fv, sv, jitter)
    best = np.max(table)
    if not np.isfinite(best):
        raise NotPositiveDefinite("outcome covariance is singular at every grid point")
    # C-order flattening is already lexicographic in (theta, f, s)
    first = int(np.flatnonzero(table.ravel() >= best - tie_tol)[0])
    a, b, c = np.unravel_index(first, table.shape)
    return RegionHyperParams(tv[a], fv[b], sv[c])


def _tune_one(args):
    k, region, grid, overrides = args
    with count_flops() as counter:
        try:
            hp = grid_search_region(region, grid, **overrides)
        except Exception as exc:  # re-raised in the parent with the region index
            return k, exc, dict(counter.counts)
    return k, hp, dict(counter.counts)


def tune_all(dataset: Dataset, partition: Partition, grid: TuningGrid = SIMULATION_GRID,
             workers: int = 1, **overrides) -> list[RegionHyperParams]:
    """Run :func:`grid_search_region` on every region.

    Results are returned in region order and do not depend on ``workers``.
    A failure in region ``k`` is raised as :class:`RegionError` carrying ``k``.
    """
    tasks = [(k, dataset.subset(partition.members(k)), grid, overrides) for k in range(partition.K)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_tune_one, tasks))
    else:
        results = [_tune_one(task) for task in tasks]
    counter = current_counter()
    out = []
    for k, res, counts in results:
        if counter is not None:
            counter.merge(counts)
        if isinstance(res, Exception):
            raise RegionError(k, res) from res
        out.append(res)
    return out
