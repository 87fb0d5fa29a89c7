"""Data containers and propensity-score partitioning.

Regions are indexed from 0 in code.  A sample with score ``s`` belongs to
region ``k`` when ``cutoffs[k-1] <= s < cutoffs[k]`` (with implicit outer
cutoffs 0 and 1); the last region is closed on the right.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DuplicateCutoff, EmptyRegion, InvalidInput, InvalidK


@dataclass(frozen=True)
class Dataset:
    """Covariates ``X`` (n, p), outcome ``y`` (n,) and binary treatment ``t`` (n,).

    ``true_theta`` and ``true_propensity`` are only populated for synthetic data.
    """

    X: np.ndarray
    y: np.ndarray
    t: np.ndarray
    true_theta: np.ndarray | None = None
    true_propensity: np.ndarray | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        t = np.asarray(self.t)
        if t.dtype.kind == "f":
            if not np.all(np.isin(t, (0.0, 1.0))):
                raise InvalidInput("treatment entries must be 0 or 1")
        t = t.astype(np.int64).reshape(-1)
        n = X.shape[0]
        if n < 1:
            raise InvalidInput("dataset must contain at least one row")
        if y.shape[0] != n or t.shape[0] != n:
            raise DimensionMismatch(f"row counts differ: X {n}, y {y.shape[0]}, t {t.shape[0]}")
        if not np.all((t == 0) | (t == 1)):
            raise InvalidInput("treatment entries must be 0 or 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInput("X and y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        for name in ("true_theta", "true_propensity"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float).reshape(-1)
                if v.shape[0] != n:
                    raise DimensionMismatch(f"{name} has {v.shape[0]} rows, expected {n}")
                object.__setattr__(self, name, v)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.X[idx],
            self.y[idx],
            self.t[idx],
            None if self.true_theta is None else self.true_theta[idx],
            None if self.true_propensity is None else self.true_propensity[idx],
        )


@dataclass(frozen=True)
class RegionHyperParams:
    """Kernel inverse length-scales and noise precision for one region."""

    gamma_theta: float
    gamma_f: float
    s_eps: float

    def __post_init__(self):
        for name in ("gamma_theta", "gamma_f", "s_eps"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0):
                raise InvalidInput(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.gamma_theta, self.gamma_f, self.s_eps)


@dataclass(frozen=True)
class Partition:
    """K ordered propensity regions.

    Attributes
    ----------
    cutoffs : ndarray, shape (K-1,)
        Strictly increasing interior boundaries in (0, 1).
    assignment : ndarray of int, shape (n,)
        Region index (0-based) of every sample.
    """

    cutoffs: np.ndarray
    assignment: np.ndarray
    K: int = field(init=False)

    def __post_init__(self):
        cutoffs = _check_cutoffs(self.cutoffs)
        object.__setattr__(self, "cutoffs", cutoffs)
        object.__setattr__(self, "assignment", np.asarray(self.assignment, dtype=np.int64))
        object.__setattr__(self, "K", cutoffs.size + 1)

    def members(self, k: int) -> np.ndarray:
        """Indices of the samples in region ``k``."""
        return np.flatnonzero(self.assignment == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.K)


def _check_cutoffs(cutoffs) -> np.ndarray:
    c = np.asarray(cutoffs, dtype=float).reshape(-1)
    if np.any(~np.isfinite(c)) or np.any(c <= 0) or np.any(c >= 1):
        raise InvalidInput("cutoffs must lie in the open interval (0, 1)")
    if np.any(np.diff(c) <= 0):
        raise DuplicateCutoff(f"cutoffs are not strictly increasing: {c.tolist()}")
    return c


def quantile_cutoffs(scores, K: int) -> np.ndarray:
    """Cutoffs at the ``j/K`` quantiles (j = 1..K-1) of ``scores``.

    Quantiles interpolate linearly between order statistics, so an even split
    of an even-sized sample lands on the midpoint.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    if not isinstance(K, (int, np.integer)) or K < 1 or K > s.size:
        raise InvalidK(f"K must be in [1, n={s.size}], got {K}")
    if K == 1:
        return np.empty(0)
    c = np.quantile(s, np.arange(1, K) / K, method="linear")
    if np.any(np.diff(c) <= 0):
        raise DuplicateCutoff(f"tied scores produce repeated cutoffs: {c.tolist()}")
    return c


def region_of(scores, cutoffs) -> np.ndarray:
    """0-based region index of each score under the left-closed convention."""
    c = _check_cutoffs(cutoffs)
    s = np.asarray(scores, dtype=float).reshape(-1)
    return np.searchsorted(c, s, side="right").astype(np.int64)


def assign_regions(scores, cutoffs, min_size: int = 1) -> Partition:
    """Assign samples to regions; fail if any region has fewer than ``min_size`` samples."""
    c = _check_cutoffs(cutoffs)
    labels = region_of(scores, c)
    sizes = np.bincount(labels, minlength=c.size + 1)
    small = np.flatnonzero(sizes < max(min_size, 1))
    if small.size:
        raise EmptyRegion(
            f"regions {small.tolist()} have sizes {sizes[small].tolist()} (minimum {max(min_size, 1)})"
        )
    return Partition(c, labels)
