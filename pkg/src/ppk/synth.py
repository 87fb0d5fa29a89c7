"""Synthetic data generators for Setups A-D (six covariates, known effect).

All setups share ``Y = theta(X) T + f(X) + eps`` with ``T ~ Bernoulli(e(X))``
and ``f = b - theta / 2``.

Random numbers come from NumPy's counter-based Philox generator.  The stream
for a draw is keyed by ``(seed, setup, purpose)`` through ``SeedSequence``
spawn keys, so training and test sets of one replication never share draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import InvalidInput, UnknownSetup

SETUPS = ("A", "B", "C", "D")
PURPOSES = ("train", "test")
N_COVARIATES = 6


@dataclass(frozen=True)
class DGPSpec:
    setup: str
    n: int
    seed: int = 0
    noise_precision: float = 1.0

    def __post_init__(self):
        _setup_index(self.setup)
        if self.n < 1:
            raise InvalidInput("n must be at least 1")
        if not self.noise_precision > 0:
            raise InvalidInput("noise precision must be positive")


def _setup_index(setup: str) -> int:
    try:
        return SETUPS.index(setup)
    except ValueError:
        raise UnknownSetup(f"unknown setup {setup!r}; expected one of {SETUPS}") from None


def rng_for(seed: int, setup: str, purpose: str) -> np.random.Generator:
    """Philox stream for one (seed, setup, purpose) triple."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(_setup_index(setup), PURPOSES.index(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def trim(x, eta: float):
    """Clamp into ``[eta, 1 - eta]``."""
    return np.maximum(eta, np.minimum(x, 1.0 - eta))


def _check(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != N_COVARIATES:
        raise InvalidInput(f"setups use {N_COVARIATES} covariates, got {X.shape[1]}")
    return X


def true_theta(setup: str, X) -> np.ndarray:
    X = _check(X)
    x1, x2, x3, x4, x5 = X[:, 0], X[:, 1], X[:, 2], X[:, 3], X[:, 4]
    if setup == "A":
        return 0.5 * (x1 + x2)
    if setup == "B":
        return x1 + np.logaddexp(0.0, x2)
    if setup == "C":
        return np.ones(X.shape[0])
    if setup == "D":
        return np.maximum(x1 + x2 + x3, 0.0) - np.maximum(x4 + x5, 0.0)
    raise UnknownSetup(f"unknown setup {setup!r}")


def true_propensity(setup: str, X) -> np.ndarray:
    X = _check(X)
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    if setup == "A":
        return trim(np.sin(np.pi * x1 * x2), 0.1)
    if setup == "B":
        return np.full(X.shape[0], 0.5)
    if setup == "C":
        return expit(-(x2 + x3))
    if setup == "D":
        return expit(x1 + x2)
    raise UnknownSetup(f"unknown setup {setup!r}")


def baseline_b(setup: str, X) -> np.ndarray:
    X = _check(X)
    x1, x2, x3, x4, x5 = X[:, 0], X[:, 1], X[:, 2], X[:, 3], X[:, 4]
    if setup == "A":
        return np.sin(np.pi * x1 * x2) + 2.0 * (x3 - 0.5) ** 2 + x4 + 0.5 * x5
    if setup == "B":
        return np.maximum(np.maximum(x1 + x2, x3), 0.0) + np.maximum(x4, x5)
    if setup == "C":
        return 2.0 * np.logaddexp(0.0, x1 + x2 + x3)
    if setup == "D":
        return 0.5 * (np.maximum(x1 + x2 + x3, 0.0) - np.maximum(x4 + x5, 0.0))
    raise UnknownSetup(f"unknown setup {setup!r}")


def baseline_f(setup: str, X) -> np.ndarray:
    return baseline_b(setup, X) - 0.5 * true_theta(setup, X)


def generate(spec: DGPSpec, purpose: str = "train") -> Dataset:
    """Draw ``spec.n`` samples; identical ``(spec, purpose)`` gives identical data."""
    rng = rng_for(spec.seed, spec.setup, purpose)
    if spec.setup == "A":
        X = rng.uniform(0.0, 1.0, size=(spec.n, N_COVARIATES))
    else:
        X = rng.standard_normal(size=(spec.n, N_COVARIATES))
    e = true_propensity(spec.setup, X)
    t = (rng.uniform(size=spec.n) < e).astype(np.int64)
    theta = true_theta(spec.setup, X)
    eps = rng.standard_normal(spec.n) / np.sqrt(spec.noise_precision)
    y = theta * t + baseline_f(spec.setup, X) + eps
    return Dataset(X, y, t, true_theta=theta, true_propensity=e)
