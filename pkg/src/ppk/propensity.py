"""Logistic-regression propensity model.

The model is fit by iteratively reweighted least squares.  Because the linear
predictor is affine in each covariate, one coordinate of a point can be solved
for in closed form so that the point's score hits a prescribed value; this is
what places pseudo points exactly on a propensity boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .errors import (
    DimensionMismatch,
    InvalidInput,
    NoConvergence,
    Separation,
    SingleClass,
    ZeroCoefficient,
)

SCORE_CLIP = 1e-6
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class PropensityModel:
    intercept: float
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if not (np.isfinite(self.intercept) and np.all(np.isfinite(coef))):
            raise InvalidInput("propensity model parameters must be finite")
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "coefficients", coef)

    @property
    def p(self) -> int:
        return self.coefficients.size

    def linear_predictor(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.p:
            raise DimensionMismatch(f"expected {self.p} covariates, got {X.shape[-1]}")
        return self.intercept + X @ self.coefficients

    def predict(self, X) -> np.ndarray:
        """Scores for every row of ``X``; see :func:`predict_propensity`."""
        return np.clip(expit(self.linear_predictor(X)), _EPS, 1.0 - _EPS)


def fit_logistic(X, t, tol: float = 1e-8, max_iter: int = 100,
                 ridge: float = 1e-8, max_norm: float = 1e3) -> PropensityModel:
    """Maximum-likelihood logistic regression of ``t`` on ``X`` (with intercept).

    Newton/IRLS iterations on the weighted normal equations, with a tiny ridge
    term for stability.  Converged once the largest absolute parameter change
    drops below ``tol``.

    Raises
    ------
    SingleClass
        ``t`` is constant.
    Separation
        The parameter norm exceeded ``max_norm``, or iterations ran out with
        the classes perfectly separated.
    NoConvergence
        ``max_iter`` iterations without meeting ``tol``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.asarray(t, dtype=float).reshape(-1)
    n, p = X.shape
    if t.shape[0] != n:
        raise DimensionMismatch(f"X has {n} rows but t has {t.shape[0]}")
    if np.all(t == t[0]):
        raise SingleClass("treatment vector contains a single class")
    if n <= p + 1:
        raise InvalidInput(f"need n > p + 1 samples, got n={n}, p={p}")

    Z = np.hstack([np.ones((n, 1)), X])
    beta = np.zeros(p + 1)
    for _ in range(max_iter):
        mu = expit(Z @ beta)
        w = mu * (1.0 - mu)
        H = (Z * w[:, None]).T @ Z
        H[np.diag_indices_from(H)] += ridge
        step = np.linalg.solve(H, Z.T @ (t - mu))
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > max_norm:
            raise Separation(f"coefficients diverged (norm > {max_norm}); classes look separable")
        if np.max(np.abs(step)) < tol:
            return PropensityModel(beta[0], beta[1:])
    # the ridge keeps separated fits finite, so check the classification directly
    if np.all((Z @ beta > 0) == (t == 1)):
        raise Separation("the linear predictor separates the classes perfectly")
    raise NoConvergence(f"IRLS did not converge in {max_iter} iterations")


def predict_propensity(model: PropensityModel, x) -> float:
    """``sigmoid(intercept + coefficients . x)``, kept strictly inside (0, 1)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(model.predict(x[None, :])[0])


def clip_scores(scores) -> np.ndarray:
    """Clamp scores into ``[1e-6, 1 - 1e-6]`` (positivity guard)."""
    return np.clip(np.asarray(scores, dtype=float), SCORE_CLIP, 1.0 - SCORE_CLIP)


def solve_adjusted_coordinate(model: PropensityModel, partial_x, j: int, target_score: float,
                              eps: float = 1e-10) -> float:
    """Value ``v`` for coordinate ``j`` so the completed point scores ``target_score``.

    ``partial_x[j]`` is ignored.  Solves the logit-linear equation directly:
    ``v = (logit(target) - intercept - sum_{i != j} coef_i x_i) / coef_j``.
    """
    x = np.asarray(partial_x, dtype=float).reshape(-1)
    if x.size != model.p:
        raise DimensionMismatch(f"expected {model.p} coordinates, got {x.size}")
    cj = model.coefficients[j]
    if abs(cj) < eps:
        raise ZeroCoefficient(f"coefficient {j} is {cj:.3g}; pick another coordinate")
    target = float(np.clip(target_score, SCORE_CLIP, 1.0 - SCORE_CLIP))
    others = np.delete(model.coefficients, j) @ np.delete(x, j)
    return float((logit(target) - model.intercept - others) / cj)
