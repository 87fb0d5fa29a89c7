"""End-to-end fitting: propensity model, partition, tuning, pseudo points, posterior."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import global_gp_posterior, local_gp_posterior
from .data import Dataset, Partition, RegionHyperParams, assign_regions, quantile_cutoffs, region_of
from .engine import PosteriorHTE, posterior_hte
from .errors import DimensionMismatch, InvalidInput
from .gp_core import SIMULATION_GRID, TuningGrid, grid_search_region, tune_all
from .linalg import BASE_JITTER
from .propensity import PropensityModel, clip_scores, fit_logistic
from .pseudo import PseudoSet, build_pseudo_set

METHODS = ("ppk", "local", "global")


@dataclass
class Prediction:
    posterior: PosteriorHTE
    scores: np.ndarray
    regions: np.ndarray


@dataclass
class PPKEstimator:
    """Patchwork-kriging estimator of the heterogeneous treatment effect.

    Parameters
    ----------
    K : int
        Number of propensity regions (ignored when ``cutoffs`` is given).
    B : int
        Pseudo points per boundary.
    grid : TuningGrid
        Candidate values for every hyperparameter.
    cutoffs : sequence of float, optional
        Fixed boundaries instead of empirical quantiles of the scores.
    min_region_size : int
        Smallest admissible number of training samples per region.
    seed : int
        Base seed of the pseudo-point streams.
    standardize : bool
        Centre and scale covariates (training moments) before the GP steps.
    """

    K: int = 5
    B: int = 20
    grid: TuningGrid = SIMULATION_GRID
    cutoffs: tuple | None = None
    min_region_size: int = 5
    seed: int = 0
    workers: int = 1
    standardize: bool = False
    jitter: float = BASE_JITTER

    propensity_: PropensityModel | None = field(default=None, init=False)
    partition_: Partition | None = field(default=None, init=False)
    hyperparams_: list[RegionHyperParams] | None = field(default=None, init=False)
    pseudo_: PseudoSet | None = field(default=None, init=False)
    train_: Dataset | None = field(default=None, init=False)

    def _scale(self, X):
        return (X - self._loc) / self._scale_sd

    def fit(self, data: Dataset) -> "PPKEstimator":
        self.propensity_ = fit_logistic(data.X, data.t)
        scores = clip_scores(self.propensity_.predict(data.X))
        if self.cutoffs is None:
            cut = quantile_cutoffs(scores, self.K)
        else:
            cut = np.asarray(self.cutoffs, dtype=float)
        self.partition_ = assign_regions(scores, cut, min_size=self.min_region_size)

        if self.standardize:
            self._loc = data.X.mean(axis=0)
            sd = data.X.std(axis=0)
            self._scale_sd = np.where(sd > 0, sd, 1.0)
        else:
            self._loc, self._scale_sd = np.zeros(data.p), np.ones(data.p)
        self.train_ = Dataset(self._scale(data.X), data.y, data.t)

        self.hyperparams_ = tune_all(self.train_, self.partition_, self.grid, workers=self.workers,
                                     jitter=self.jitter)
        # pseudo points live on the raw-covariate propensity surface
        pseudo_raw = build_pseudo_set(self.propensity_, data.X, self.partition_, self.B, self.seed)
        self.pseudo_ = PseudoSet(self._scale(pseudo_raw.points), pseudo_raw.boundary_index, pseudo_raw.B)
        return self

    def scores(self, X_test) -> np.ndarray:
        self._check_fitted()
        return clip_scores(self.propensity_.predict(np.atleast_2d(np.asarray(X_test, dtype=float))))

    def predict(self, X_test, method: str = "ppk") -> Prediction:
        """Posterior of the effect at ``X_test`` for ``method`` in ``{"ppk", "local"}``."""
        self._check_fitted()
        X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
        if X_test.shape[1] != self.train_.p:
            raise DimensionMismatch(f"test covariates have {X_test.shape[1]} columns, expected {self.train_.p}")
        scores = self.scores(X_test)
        regions = region_of(scores, self.partition_.cutoffs)
        Z = self._scale(X_test)
        if method == "ppk":
            post = posterior_hte(self.train_, Z, regions, self.partition_, self.hyperparams_, self.pseudo_,
                                 jitter=self.jitter)
        elif method == "local":
            post = local_gp_posterior(self.train_, Z, regions, self.partition_, self.hyperparams_, self.jitter)
        else:
            raise InvalidInput(f"unknown method {method!r}; expected 'ppk' or 'local'")
        return Prediction(post, scores, regions)

    def _check_fitted(self):
        if self.partition_ is None:
            raise InvalidInput("estimator is not fitted")


def fit_global(data: Dataset, X_test, grid: TuningGrid = SIMULATION_GRID,
               jitter: float = BASE_JITTER) -> tuple[PosteriorHTE, RegionHyperParams]:
    """Tune one hyperparameter set on all data and return the global GP posterior."""
    hp = grid_search_region(data, grid, jitter=jitter)
    return global_gp_posterior(data, X_test, hp, jitter), hp
