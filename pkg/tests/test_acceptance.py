"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Criteria 5-8 run Monte-Carlo studies or timing comparisons and take several
minutes in total on a single core; they carry the ``slow`` marker.
"""

import subprocess
import sys
import time

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import make_instance, rel_err
from ppk.baselines import global_gp_posterior, local_gp_posterior
from ppk.cli import default_workers
from ppk.data import Dataset, Partition, RegionHyperParams
from ppk.engine import build_prior, joint_covariance, joint_precision, posterior_hte, prior_precision
from ppk.estimator import PPKEstimator, fit_global
from ppk.gp_core import TuningGrid, marginal_loglik, rbf
from ppk.harness import RunConfig, run_simulation
from ppk.linalg import count_flops
from ppk.oracle import dense_oracle_posterior
from ppk.propensity import PropensityModel
from ppk.pseudo import RegionMoments, generate_pseudo_points
from ppk.synth import DGPSpec, generate


def _random_grid(rng):
    lo = float(rng.uniform(0.05, 0.5))
    step = float(rng.uniform(0.1, 0.6))
    return TuningGrid(lo, lo + step * int(rng.integers(2, 12)), step)


def _oracle_instances(count, seed=0):
    rng = np.random.default_rng(seed)
    for i in range(count):
        yield make_instance(
            int(rng.integers(2**31)),
            n=int(rng.integers(40, 101)),
            m=int(rng.integers(1, 21)),
            K=int(rng.choice([2, 3, 5])),
            B=int(rng.choice([1, 4])),
            p=int(rng.integers(1, 5)),
            grid=_random_grid(rng),
        )


def test_criterion_01_oracle_equivalence(report_criterion):
    start = time.monotonic()
    worst_mean = worst_cov = 0.0
    for args in _oracle_instances(50):
        ref = dense_oracle_posterior(*args)
        post = posterior_hte(*args)
        worst_mean = max(worst_mean, rel_err(post.mean, ref.mean))
        worst_cov = max(worst_cov, rel_err(post.covariance, ref.covariance))
    elapsed = time.monotonic() - start
    ok = worst_mean <= 1e-6 and worst_cov <= 1e-6 and elapsed < 60
    report_criterion(1, ok, f"50 instances, max rel err mean {worst_mean:.2e} cov {worst_cov:.2e}, "
                            f"{elapsed:.1f}s (tol 1e-6, < 60s)")
    assert ok


def test_criterion_02_single_region_reduction(report_criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        n, m, p = int(rng.integers(5, 80)), int(rng.integers(1, 20)), int(rng.integers(1, 6))
        train = Dataset(rng.standard_normal((n, p)), rng.standard_normal(n), rng.integers(0, 2, n))
        X_test = rng.standard_normal((m, p))
        hp = RegionHyperParams(*rng.uniform(0.1, 5.0, 3))
        part = Partition(np.empty(0), np.zeros(n, int))
        post = posterior_hte(train, X_test, np.zeros(m, int), part, [hp], None)
        ref = global_gp_posterior(train, X_test, hp)
        worst = max(worst, rel_err(post.mean, ref.mean), rel_err(post.covariance, ref.covariance))
    ok = worst <= 1e-8
    report_criterion(2, ok, f"K=1 vs global GP on 20 instances, max rel err {worst:.2e} (tol 1e-8)")
    assert ok


def test_criterion_03_boundary_continuity(report_criterion):
    worst = 0.0
    for seed in range(10):
        train, _, _, part, hps, ps = make_instance(300 + seed, n=90, K=3, B=5)
        for b in range(part.K - 1):
            P = ps.points[ps.rows(b)]
            lower = posterior_hte(train, P, np.full(len(P), b), part, hps, ps)
            upper = posterior_hte(train, P, np.full(len(P), b + 1), part, hps, ps)
            worst = max(worst, float(np.max(np.abs(lower.mean - upper.mean))))
    ok = worst <= 1e-6
    report_criterion(3, ok, f"10 instances K=3 B=5, max |mean_k - mean_k+1| at pseudo points {worst:.2e} (tol 1e-6)")
    assert ok


def test_criterion_04_pseudo_point_exactness(report_criterion):
    seen = []

    coef = st.one_of(st.just(0.0), st.floats(-4, 4).filter(lambda c: abs(c) > 1e-3))

    @settings(max_examples=500, deadline=None, derandomize=True)
    @given(
        st.floats(-3, 3),
        st.lists(coef, min_size=1, max_size=8).filter(lambda cs: any(c != 0 for c in cs)),
        st.floats(0.01, 0.99),
        st.integers(0, 2**31),
    )
    def check(b0, coefs, cutoff, seed):
        p = len(coefs)
        model = PropensityModel(b0, np.array(coefs))
        rng = np.random.default_rng(seed)
        mk = RegionMoments(rng.normal(0, 2, p), rng.uniform(0, 3, p))
        mk1 = RegionMoments(rng.normal(0, 2, p), rng.uniform(0, 3, p))
        pts = generate_pseudo_points(model, mk, mk1, cutoff, 20, seed)
        err = np.abs(model.predict(pts) - cutoff)
        seen.append(float(err.max()))
        assert err.max() < 1e-10

    try:
        check()
        ok = True
    except AssertionError:
        ok = False
    points = 20 * len(seen)
    worst = max(seen) if seen else float("nan")
    ok = ok and points >= 10000
    report_criterion(4, ok, f"{points} pseudo points, max |e(x) - cutoff| {worst:.2e} (tol 1e-10)")
    assert ok


@pytest.mark.slow
def test_criterion_05_setup_a_ordering(report_criterion):
    cfg = RunConfig(setup="A", n=500, test_m=500, K=5, B=20, grid=TuningGrid(0.1, 5.0, 0.2),
                    replications=20, seed=0, methods=("ppk", "local"))
    start = time.monotonic()
    report = run_simulation(cfg, workers=default_workers())
    elapsed = time.monotonic() - start
    ppk, local = report.method("ppk"), report.method("local")
    ok = (ppk.replications == 20 and local.replications == 20 and ppk.mse < local.mse
          and 0.02 <= ppk.mse <= 0.12 and elapsed < 15 * 60)
    report_criterion(5, ok, f"Setup A N=500 K=5 20 reps: PPK MSE {ppk.mse:.4f} vs local {local.mse:.4f} "
                            f"(band [0.02, 0.12]), {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_06_setup_c_penalty_bounded(report_criterion):
    cfg = RunConfig(setup="C", n=500, test_m=500, K=5, B=20, replications=20, seed=0,
                    methods=("ppk", "global"))
    report = run_simulation(cfg, workers=default_workers())
    ppk, glob = report.method("ppk"), report.method("global")
    ok = ppk.replications == 20 and glob.replications == 20 and ppk.mse <= 2 * glob.mse
    report_criterion(6, ok, f"Setup C N=500 K=5 20 reps: PPK MSE {ppk.mse:.4f} vs 2 x global {2 * glob.mse:.4f}")
    assert ok


@pytest.mark.slow
def test_criterion_07_boundary_bias(report_criterion):
    cfg = RunConfig(setup="A", n=500, test_m=500, B=20, replications=50, seed=0, methods=("ppk", "local"),
                    cutoffs=(0.5,), margin=0.01)
    report = run_simulation(cfg, workers=default_workers())
    ppk = report.method("ppk").boundary_bias[0]
    local = report.method("local").boundary_bias[0]
    ok = (not ppk["empty"] and not local["empty"] and ppk["mean_abs_bias"] <= local["mean_abs_bias"])
    report_criterion(7, ok, f"Setup A cutoff 0.5, 50 reps, margin 0.01: mean |bias| PPK "
                            f"{ppk['mean_abs_bias']:.4f} vs local {local['mean_abs_bias']:.4f} "
                            f"(signed {ppk['bias']:+.4f} / {local['bias']:+.4f}, "
                            f"{ppk['replications_with_points']} reps with points)")
    assert ok


@pytest.mark.slow
def test_criterion_08_scaling(report_criterion):
    train = generate(DGPSpec("A", 2000, 0))
    test = generate(DGPSpec("A", 500, 0), "test")
    # a 3-point grid per hyperparameter keeps the dense n = 2000 search affordable
    grid = TuningGrid(0.1, 4.9, 2.4)
    workers = default_workers()

    start = time.monotonic()
    with count_flops() as ppk_flops:
        est = PPKEstimator(K=10, B=20, grid=grid, workers=workers).fit(train)
        est.predict(test.X)
    ppk_time = time.monotonic() - start

    start = time.monotonic()
    fit_global(train, test.X, grid)
    global_time = time.monotonic() - start

    with count_flops() as single_flops:
        est1 = PPKEstimator(K=1, B=20, grid=grid, workers=workers).fit(train)
        est1.predict(test.X)

    ratio = ppk_flops.total / single_flops.total
    ok = ppk_time < global_time and ratio < 0.1
    report_criterion(8, ok, f"n=2000: PPK K=10 fit {ppk_time:.1f}s vs global GP {global_time:.1f}s; "
                            f"factorization FLOPs K=10/K=1 = {ratio:.4f} (< 0.1)")
    assert ok


def _dense_logpdf(y, t, X, hp, jitter=1e-8):
    m = len(y)
    V = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            V[i, j] = t[i] * t[j] * rbf(X[i], X[j], hp.gamma_theta) + rbf(X[i], X[j], hp.gamma_f)
        V[i, i] += 1.0 / hp.s_eps + jitter * (t[i] ** 2 + 1)
    sign, logdet = np.linalg.slogdet(V)
    assert sign > 0
    return -0.5 * (y @ np.linalg.solve(V, y) + logdet + m * np.log(2 * np.pi))


def test_criterion_09_numerical_hygiene(report_criterion):
    min_eig = np.inf
    asym = 0.0
    for args in _oracle_instances(15, seed=9):
        train, X_test, regions, part, hps, ps = args
        for post in (posterior_hte(*args), posterior_hte(*args, route="precision"),
                     local_gp_posterior(train, X_test, regions, part, hps),
                     global_gp_posterior(train, X_test, hps[0])):
            asym = max(asym, float(np.max(np.abs(post.covariance - post.covariance.T))))
            min_eig = min(min_eig, float(np.linalg.eigvalsh(post.covariance).min()))

    rng = np.random.default_rng(99)
    ll_err = 0.0
    for _ in range(100):
        m, p = int(rng.integers(1, 15)), int(rng.integers(1, 5))
        X, y, t = rng.standard_normal((m, p)), rng.standard_normal(m), rng.integers(0, 2, m)
        hp = RegionHyperParams(*rng.uniform(0.1, 5.0, 3))
        ref = _dense_logpdf(y, t, X, hp)
        ll_err = max(ll_err, abs(marginal_loglik(y, t, X, hp) - ref) / abs(ref))

    def schur_errors(args):
        prior = build_prior(*args)
        prec = prior_precision(prior)
        S = prior.assemble()
        s = np.array([args[4][k].s_eps for k in args[3].assignment])
        jp = joint_precision(prec, args[0].t, s)
        J = jp.assemble()
        err = max(rel_err(prec.assemble(), np.linalg.inv(S)),
                  rel_err(joint_covariance(jp).assemble(), np.linalg.inv(J)))
        # disagreement between two dense inversions (LU vs Cholesky) of the same matrices
        spread = max(rel_err(np.linalg.inv(S), sla.cho_solve(sla.cho_factor(S), np.eye(len(S)))),
                     rel_err(np.linalg.inv(J), sla.cho_solve(sla.cho_factor(J), np.eye(len(J)))))
        return err, spread

    # gated: random sizes, K, B; three covariates and the simulation grid
    rng = np.random.default_rng(19)
    schur_err = 0.0
    for _ in range(20):
        args = make_instance(int(rng.integers(2**31)), n=int(rng.integers(30, 101)), m=int(rng.integers(1, 16)),
                             K=int(rng.choice([2, 3, 5])), B=int(rng.choice([1, 4])))
        schur_err = max(schur_err, schur_errors(args)[0])
    # reported only: the harsher family of criterion 1 contains near-singular priors
    # where even two dense inversions disagree beyond 1e-8
    harsh = [schur_errors(args) for args in _oracle_instances(15, seed=19)]
    harsh_err = max(e for e, _ in harsh)
    harsh_spread = max(sp for _, sp in harsh)

    ok = asym == 0.0 and min_eig >= -1e-8 and ll_err <= 1e-9 and schur_err <= 1e-8
    report_criterion(9, ok, f"covariance asymmetry {asym:.1e}, min eigenvalue {min_eig:.2e} (>= -1e-8); "
                            f"loglik rel err {ll_err:.2e} (1e-9); Schur vs dense inverse {schur_err:.2e} (1e-8) "
                            f"[near-singular family, not gated: Schur {harsh_err:.1e}, "
                            f"LU vs Cholesky spread {harsh_spread:.1e}]")
    assert ok


def _without_wall_time(text: str) -> bytes:
    return "".join(line for line in text.splitlines(keepends=True) if '"wall_time_seconds"' not in line).encode()


def test_criterion_10_determinism(tmp_path, report_criterion):
    flags = ["simulate", "--setup", "D", "--n", "120", "--test-m", "60", "--k", "3", "--b", "5",
             "--reps", "3", "--seed", "11", "--grid-min", "0.1", "--grid-max", "4.9", "--grid-step", "1.2",
             "--methods", "ppk,local,global", "--cutoffs", "quantile", "--margin", "0.02"]
    outputs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        proc = subprocess.run([sys.executable, "-m", "ppk", "--workers", "2", *flags, "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append(out.read_text())
    ok = _without_wall_time(outputs[0]) == _without_wall_time(outputs[1])
    report_criterion(10, ok, f"two identical simulate runs, {len(outputs[0])} bytes: "
                             f"byte-identical excluding wall time = {ok}")
    assert ok
