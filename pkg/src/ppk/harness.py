"""Monte-Carlo simulation runner and evaluation metrics."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import quantile_cutoffs
from .engine import PosteriorHTE
from .errors import DimensionMismatch, InvalidInput, PPKError, UnknownSetup
from .estimator import METHODS, PPKEstimator, fit_global
from .gp_core import TuningGrid
from .propensity import clip_scores, fit_logistic
from .synth import SETUPS, DGPSpec, generate


def compute_metrics(post: PosteriorHTE, truth, level: float = 0.95) -> tuple[float, float, float]:
    """Mean squared error, mean interval length and empirical coverage.

    Intervals are central Gaussian ``mean +/- z * sd``; ``level = 0`` gives
    zero-width intervals.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if truth.shape[0] != post.mean.shape[0]:
        raise DimensionMismatch(f"{post.mean.shape[0]} estimates but {truth.shape[0]} truths")
    if not 0.0 <= level < 1.0:
        raise InvalidInput("level must be in [0, 1)")
    err = post.mean - truth
    mse = float(np.mean(err * err))
    half = norm.ppf(0.5 + level / 2.0) * post.sd
    length = float(np.mean(2.0 * half))
    coverage = float(np.mean(np.abs(err) <= half)) if level > 0 else 0.0
    return mse, length, coverage


@dataclass(frozen=True)
class BoundaryCell:
    cutoff: float
    bias: float | None
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0


def boundary_bias(estimates, truths, scores, cutoffs, margin: float) -> list[BoundaryCell]:
    """Mean ``estimate - truth`` over points with ``|score - cutoff| <= margin``, per cutoff."""
    if not margin > 0:
        raise InvalidInput("margin must be positive")
    est = np.asarray(estimates, dtype=float).reshape(-1)
    tru = np.asarray(truths, dtype=float).reshape(-1)
    sc = np.asarray(scores, dtype=float).reshape(-1)
    if not est.shape == tru.shape == sc.shape:
        raise DimensionMismatch("estimates, truths and scores must have equal length")
    out = []
    for c in np.asarray(cutoffs, dtype=float).reshape(-1):
        near = np.abs(sc - c) <= margin
        count = int(near.sum())
        bias = float(np.mean(est[near] - tru[near])) if count else None
        out.append(BoundaryCell(float(c), bias, count))
    return out


@dataclass(frozen=True)
class RunConfig:
    setup: str = "A"
    n: int = 500
    test_m: int = 500
    K: int = 5
    B: int = 20
    grid: TuningGrid = TuningGrid()
    replications: int = 1
    seed: int = 0
    methods: tuple = METHODS
    cutoffs: tuple | str = "quantile"
    margin: float = 0.01
    level: float = 0.95
    noise_precision: float = 1.0

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise UnknownSetup(f"unknown setup {self.setup!r}")
        for name in ("n", "test_m", "K", "B", "replications"):
            if getattr(self, name) < 1:
                raise InvalidInput(f"{name} must be positive")
        if self.seed < 0:
            raise InvalidInput("seed must be non-negative")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise InvalidInput(f"methods must be a non-empty subset of {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise InvalidInput("methods must not repeat")
        if not self.margin > 0:
            raise InvalidInput("margin must be positive")
        if not 0 < self.level < 1:
            raise InvalidInput("level must be in (0, 1)")
        if self.cutoffs != "quantile":
            c = tuple(float(v) for v in self.cutoffs)
            if any(not 0 < v < 1 for v in c) or any(b <= a for a, b in zip(c, c[1:])):
                raise InvalidInput("fixed cutoffs must be strictly increasing in (0, 1)")
            object.__setattr__(self, "cutoffs", c)
            object.__setattr__(self, "K", len(c) + 1)

    def as_dict(self) -> dict:
        return {
            "setup": self.setup, "N": self.n, "test_m": self.test_m, "K": self.K, "B": self.B,
            "grid": {"min": self.grid.min, "max": self.grid.max, "step": self.grid.step},
            "replications": self.replications, "seed": self.seed, "methods": list(self.methods),
            "cutoffs": self.cutoffs if isinstance(self.cutoffs, str) else list(self.cutoffs),
            "margin": self.margin, "level": self.level, "noise_precision": self.noise_precision,
            "rng": "philox",
        }


@dataclass
class MethodMetrics:
    method: str
    N: int
    K: int
    mse: float
    mean_ci_length: float
    coverage: float
    boundary_bias: list
    wall_time_seconds: float
    replications: int
    failures: int
    failure_messages: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "method": self.method, "N": self.N, "K": self.K, "mse": self.mse,
            "mean_ci_length": self.mean_ci_length, "coverage": self.coverage,
            "boundary_bias": self.boundary_bias, "wall_time_seconds": self.wall_time_seconds,
            "replications": self.replications, "failures": self.failures,
            "failure_messages": self.failure_messages,
        }


@dataclass
class MetricsReport:
    config: dict
    results: list[MethodMetrics]

    def method(self, name: str) -> MethodMetrics:
        for r in self.results:
            if r.method == name:
                return r
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {"config": self.config, "results": [r.as_dict() for r in self.results]}


def _cutoffs_for(config: RunConfig, train):
    if config.cutoffs != "quantile":
        return np.asarray(config.cutoffs), None
    model = fit_logistic(train.X, train.t)
    return quantile_cutoffs(clip_scores(model.predict(train.X)), config.K), model


def run_replication(config: RunConfig, r: int, workers: int = 1) -> dict:
    """One replication; returns per-method metrics, failures and timings."""
    seed = config.seed + r
    train = generate(DGPSpec(config.setup, config.n, seed, config.noise_precision), "train")
    test = generate(DGPSpec(config.setup, config.test_m, seed, config.noise_precision), "test")
    out = {}
    est, est_error, est_time = None, None, 0.0
    if "ppk" in config.methods or "local" in config.methods:
        start = time.monotonic()
        try:
            est = PPKEstimator(K=config.K, B=config.B, grid=config.grid,
                               cutoffs=None if config.cutoffs == "quantile" else config.cutoffs,
                               seed=seed, workers=workers).fit(train)
        except PPKError as exc:
            est_error = exc
        est_time = time.monotonic() - start

    for method in config.methods:
        start = time.monotonic()
        try:
            if method == "global":
                post, _ = fit_global(train, test.X, config.grid)
                if est is not None:
                    cut, scores = est.partition_.cutoffs, est.scores(test.X)
                else:
                    cut, model = _cutoffs_for(config, train)
                    model = model or fit_logistic(train.X, train.t)
                    scores = clip_scores(model.predict(test.X))
            else:
                if est_error is not None:
                    raise est_error
                pred = est.predict(test.X, method)
                post, cut, scores = pred.posterior, est.partition_.cutoffs, pred.scores
            mse, length, cov = compute_metrics(post, test.true_theta, config.level)
            cells = boundary_bias(post.mean, test.true_theta, scores, cut, config.margin)
            elapsed = time.monotonic() - start + (0.0 if method == "global" else est_time)
            out[method] = {"ok": True, "mse": mse, "ci": length, "cov": cov,
                           "bias": [(c.cutoff, c.bias, c.count) for c in cells], "time": elapsed}
        except PPKError as exc:
            out[method] = {"ok": False, "error": f"replication {r}: {type(exc).__name__}: {exc}",
                           "time": time.monotonic() - start}
    return out


def _replication_task(args):
    config, r = args
    return r, run_replication(config, r)


def _mean(values):
    return math.fsum(values) / len(values) if values else None


def aggregate(config: RunConfig, per_rep: dict) -> MetricsReport:
    """Arithmetic means over successful replications (order independent)."""
    results = []
    for method in config.methods:
        rows = [per_rep[r][method] for r in sorted(per_rep)]
        good = [row for row in rows if row["ok"]]
        cells = []
        if good:
            for j, (cutoff, _, _) in enumerate(good[0]["bias"]):
                biases = [row["bias"][j][1] for row in good if row["bias"][j][1] is not None]
                cells.append({
                    "cutoff": cutoff,
                    "bias": _mean(biases),
                    "mean_abs_bias": _mean([abs(b) for b in biases]),
                    "points": sum(row["bias"][j][2] for row in good),
                    "replications_with_points": len(biases),
                    "empty": not biases,
                })
        results.append(MethodMetrics(
            method=method, N=config.n, K=config.K,
            mse=_mean([row["mse"] for row in good]),
            mean_ci_length=_mean([row["ci"] for row in good]),
            coverage=_mean([row["cov"] for row in good]),
            boundary_bias=cells,
            wall_time_seconds=math.fsum(row["time"] for row in rows),
            replications=len(good),
            failures=len(rows) - len(good),
            failure_messages=[row["error"] for row in rows if not row["ok"]],
        ))
    return MetricsReport(config.as_dict(), results)


def run_simulation(config: RunConfig, workers: int = 1) -> MetricsReport:
    """Run all replications (in parallel when ``workers > 1``) and aggregate.

    Replication ``r`` draws its data from seed ``config.seed + r``; results do
    not depend on ``workers`` apart from wall times.
    """
    reps = range(config.replications)
    if workers > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=min(workers, config.replications)) as pool:
            per_rep = dict(pool.map(_replication_task, [(config, r) for r in reps]))
    else:
        # a single replication may still spread region tuning over workers
        per_rep = {r: run_replication(config, r, workers) for r in reps}
    return aggregate(config, per_rep)
