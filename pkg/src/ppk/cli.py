"""Command-line interface: ``ppk simulate`` and ``ppk fit``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import InvalidInput, NumericalError, PPKError, RegionError
from .estimator import METHODS, PPKEstimator, fit_global
from .gp_core import TuningGrid
from .harness import RunConfig, run_simulation
from .io import read_covariates, read_csv, report_json, write_estimates, write_report

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1) - 1)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {v}")
    return v


def _methods(text):
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [m for m in items if m not in METHODS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"methods must be drawn from {','.join(METHODS)}")
    return items


def _cutoffs(text):
    if text == "quantile":
        return text
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'quantile' or comma-separated numbers: {text!r}") from None


def _add_grid(p):
    p.add_argument("--grid-min", type=_positive_float, default=0.1)
    p.add_argument("--grid-max", type=_positive_float, default=5.0)
    p.add_argument("--grid-step", type=_positive_float, default=0.2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ppk", description="Treatment-effect estimation with propensity-partitioned local GPs.")
    workers = _Parser(add_help=False)
    workers.add_argument("--workers", type=_positive_int, default=argparse.SUPPRESS,
                         help="parallel processes (default: available cores - 1)")
    parser.add_argument("--workers", type=_positive_int, default=default_workers(),
                        help="parallel processes (default: available cores - 1)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", parents=[workers], help="Monte-Carlo study on a synthetic setup")
    sim.add_argument("--setup", choices=["A", "B", "C", "D"], required=True)
    sim.add_argument("--n", type=_positive_int, default=500)
    sim.add_argument("--test-m", type=_positive_int, default=500)
    sim.add_argument("--k", type=_positive_int, default=5)
    sim.add_argument("--b", type=_positive_int, default=20)
    sim.add_argument("--reps", type=_positive_int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    _add_grid(sim)
    sim.add_argument("--methods", type=_methods, default=METHODS)
    sim.add_argument("--cutoffs", type=_cutoffs, default="quantile")
    sim.add_argument("--margin", type=_positive_float, default=0.01)
    sim.add_argument("--level", type=float, default=0.95)
    sim.add_argument("--out", help="report path (JSON); printed to stdout when omitted")

    fit = sub.add_parser("fit", parents=[workers], help="fit on a CSV and write per-point estimates")
    fit.add_argument("--data", required=True)
    fit.add_argument("--k", type=_positive_int, default=5)
    fit.add_argument("--b", type=_positive_int, default=20)
    fit.add_argument("--seed", type=int, default=0)
    _add_grid(fit)
    fit.add_argument("--test", help="CSV with x1..xp columns (default: training covariates)")
    fit.add_argument("--out", required=True)
    fit.add_argument("--method", choices=METHODS, default="ppk")
    fit.add_argument("--standardize", action="store_true", help="centre and scale covariates")
    fit.add_argument("--level", type=float, default=0.95)
    return parser


def _simulate(args) -> None:
    config = RunConfig(
        setup=args.setup, n=args.n, test_m=args.test_m, K=args.k, B=args.b,
        grid=TuningGrid(args.grid_min, args.grid_max, args.grid_step), replications=args.reps,
        seed=args.seed, methods=args.methods, cutoffs=args.cutoffs, margin=args.margin, level=args.level,
    )
    report = run_simulation(config, workers=args.workers)
    if args.out:
        write_report(args.out, report)
        print("method\tN\tK\tmse\tmean_ci_length\tcoverage\treplications\tfailures")
        for r in report.results:
            print(f"{r.method}\t{r.N}\t{r.K}\t{r.mse}\t{r.mean_ci_length}\t{r.coverage}\t"
                  f"{r.replications}\t{r.failures}")
    else:
        sys.stdout.write(report_json(report))


def _fit(args) -> None:
    train = read_csv(args.data)
    X_test = train.X if args.test is None else read_covariates(args.test)
    grid = TuningGrid(args.grid_min, args.grid_max, args.grid_step)
    est = PPKEstimator(K=args.k, B=args.b, grid=grid, seed=args.seed, workers=args.workers,
                       standardize=args.standardize).fit(train)
    if args.method == "global":
        pred = est.predict(X_test, "local")
        post, _ = fit_global(est.train_, est._scale(X_test), grid)
        scores, regions = pred.scores, pred.regions
    else:
        pred = est.predict(X_test, args.method)
        post, scores, regions = pred.posterior, pred.scores, pred.regions
    write_estimates(args.out, post, scores, regions, args.level)
    print(f"wrote {post.mean.shape[0]} estimates to {args.out}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if args.command == "simulate":
            _simulate(args)
        else:
            _fit(args)
    except RegionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc.cause, NumericalError) else EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidInput, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PPKError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
