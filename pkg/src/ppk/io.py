"""CSV input, estimate output and JSON report serialization."""

from __future__ import annotations

import csv
import json
import math
import re

import numpy as np

from .data import Dataset
from .engine import PosteriorHTE
from .errors import MalformedCsv

_XCOL = re.compile(r"^x(\d+)$")
ESTIMATE_COLUMNS = ("row_id", "propensity", "region", "theta_mean", "theta_sd", "ci_lo", "ci_hi")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedCsv(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [(i + 2, r) for i, r in enumerate(rows[1:]) if any(c.strip() for c in r)]
    for line, r in body:
        if len(r) != len(header):
            raise MalformedCsv(f"{path}: line {line} has {len(r)} fields, header has {len(header)}")
    return header, body


def _x_columns(path, header) -> list[int]:
    found = {int(m.group(1)): i for i, h in enumerate(header) if (m := _XCOL.match(h))}
    if not found:
        raise MalformedCsv(f"{path}: missing column x1")
    p = max(found)
    for j in range(1, p + 1):
        if j not in found:
            raise MalformedCsv(f"{path}: missing column x{j}")
    return [found[j] for j in range(1, p + 1)]


def _numeric(path, body, col: int, name: str) -> np.ndarray:
    out = np.empty(len(body))
    for k, (line, r) in enumerate(body):
        try:
            out[k] = float(r[col])
        except ValueError:
            raise MalformedCsv(f"{path}: line {line}, column {name}: non-numeric value {r[col]!r}") from None
        if not math.isfinite(out[k]):
            raise MalformedCsv(f"{path}: line {line}, column {name}: non-finite value {r[col]!r}")
    return out


def read_covariates(path) -> np.ndarray:
    """Matrix of the ``x1..xp`` columns; other columns are ignored."""
    header, body = _read_table(path)
    cols = _x_columns(path, header)
    if not body:
        raise MalformedCsv(f"{path}: no data rows")
    return np.column_stack([_numeric(path, body, c, header[c]) for c in cols])


def read_csv(path) -> Dataset:
    """Dataset from a CSV with header columns ``y``, ``t`` and ``x1..xp``.

    An optional ``true_theta`` column is carried along; other columns are ignored.
    """
    header, body = _read_table(path)
    for name in ("y", "t"):
        if name not in header:
            raise MalformedCsv(f"{path}: missing column {name}")
    X = read_covariates(path)
    y = _numeric(path, body, header.index("y"), "y")
    t = _numeric(path, body, header.index("t"), "t")
    bad = np.flatnonzero((t != 0) & (t != 1))
    if bad.size:
        line = body[bad[0]][0]
        raise MalformedCsv(f"{path}: line {line}, column t: treatment must be 0 or 1")
    theta = None
    if "true_theta" in header:
        theta = _numeric(path, body, header.index("true_theta"), "true_theta")
    return Dataset(X, y, t.astype(np.int64), true_theta=theta)


def write_dataset(path, data: Dataset) -> None:
    """Inverse of :func:`read_csv` at 17 significant digits."""
    header = ["y", "t"] + [f"x{j + 1}" for j in range(data.p)]
    if data.true_theta is not None:
        header.append("true_theta")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [_fmt(data.y[i]), str(int(data.t[i]))] + [_fmt(v) for v in data.X[i]]
            if data.true_theta is not None:
                row.append(_fmt(data.true_theta[i]))
            w.writerow(row)


def write_estimates(path, post: PosteriorHTE, scores, regions=None, level: float = 0.95) -> None:
    """One row per test point; ``region`` is 1-based in the file."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    lo, hi = post.interval(level)
    sd = post.sd
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_COLUMNS)
        for i in range(post.mean.shape[0]):
            region = "" if regions is None else str(int(regions[i]) + 1)
            w.writerow([str(i), _fmt(scores[i]), region, _fmt(post.mean[i]), _fmt(sd[i]),
                        _fmt(lo[i]), _fmt(hi[i])])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report_json(report) -> str:
    """Deterministic JSON text (sorted keys, one field per line)."""
    return json.dumps(_clean(report.as_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(path, report) -> None:
    with open(path, "w") as fh:
        fh.write(report_json(report))
