"""Pseudo inputs placed exactly on propensity-score boundaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Partition
from .errors import NoAdjustableDimension, TooFewSamples
from .propensity import PropensityModel, solve_adjusted_coordinate


@dataclass(frozen=True)
class RegionMoments:
    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class PseudoSet:
    """``B`` boundary points for each of the ``K - 1`` boundaries.

    ``boundary_index[r]`` is the 0-based boundary of row ``r``; boundary ``b``
    separates regions ``b`` and ``b + 1``.  Rows are grouped by boundary.
    """

    points: np.ndarray
    boundary_index: np.ndarray
    B: int

    @property
    def n_boundaries(self) -> int:
        return 0 if self.points.shape[0] == 0 else int(self.boundary_index.max()) + 1

    def rows(self, b: int) -> np.ndarray:
        return np.flatnonzero(self.boundary_index == b)


def region_moments(X_region) -> RegionMoments:
    X = np.atleast_2d(np.asarray(X_region, dtype=float))
    if X.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 rows for moments, got {X.shape[0]}")
    return RegionMoments(X.mean(axis=0), X.var(axis=0, ddof=1))


def generate_pseudo_points(model: PropensityModel, moments_k: RegionMoments,
                           moments_k1: RegionMoments, cutoff: float, B: int,
                           rng_seed: int, coef_eps: float = 1e-10) -> np.ndarray:
    """``B`` points whose estimated propensity equals ``cutoff``.

    Each row picks one adjustable coordinate uniformly among those with a
    non-negligible propensity coefficient, draws the others independently
    from a normal with the averaged moments of the two adjacent regions, then
    solves for the adjusted coordinate.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    adjustable = np.flatnonzero(np.abs(model.coefficients) >= coef_eps)
    if adjustable.size == 0:
        raise NoAdjustableDimension("all propensity coefficients are numerically zero")
    mean = 0.5 * moments_k.mean + 0.5 * moments_k1.mean
    sd = np.sqrt(0.5 * moments_k.variance + 0.5 * moments_k1.variance)
    rng = np.random.Generator(np.random.Philox(rng_seed))
    p = model.p
    out = np.empty((B, p))
    for b in range(B):
        j = int(adjustable[rng.integers(adjustable.size)])
        row = rng.normal(mean, sd, size=p)
        row[j] = solve_adjusted_coordinate(model, row, j, cutoff, eps=coef_eps)
        out[b] = row
    return out


def build_pseudo_set(model: PropensityModel, X_train, partition: Partition, B: int = 20,
                     base_seed: int = 0) -> PseudoSet:
    """Pseudo points for every boundary; boundary ``b`` uses seed ``base_seed + b``."""
    X_train = np.atleast_2d(np.asarray(X_train, dtype=float))
    moments = [region_moments(X_train[partition.members(k)]) for k in range(partition.K)]
    blocks = [
        generate_pseudo_points(model, moments[b], moments[b + 1], c, B, base_seed + b)
        for b, c in enumerate(partition.cutoffs)
    ]
    if not blocks:
        return PseudoSet(np.empty((0, X_train.shape[1])), np.empty(0, dtype=np.int64), B)
    return PseudoSet(np.vstack(blocks), np.repeat(np.arange(len(blocks)), B), B)
