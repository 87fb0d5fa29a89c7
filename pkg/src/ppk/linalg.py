"""Cholesky helpers, a block-tridiagonal factorization and a FLOP tally."""

from __future__ import annotations

import contextlib
import contextvars
from collections import defaultdict

import numpy as np
import scipy.linalg as sla

from .errors import NotPositiveDefinite

BASE_JITTER = 1e-8
MAX_JITTER = 1e-4

_counter: contextvars.ContextVar = contextvars.ContextVar("ppk_flop_counter", default=None)


class FlopCounter:
    """Accumulates nominal FLOPs of the dense factorizations, keyed by kind."""

    def __init__(self):
        self.counts: dict[str, float] = defaultdict(float)

    def add(self, kind: str, flops: float) -> None:
        self.counts[kind] += float(flops)

    def merge(self, counts: dict[str, float]) -> None:
        for k, v in counts.items():
            self.counts[k] += v

    @property
    def total(self) -> float:
        return float(sum(self.counts.values()))


@contextlib.contextmanager
def count_flops():
    """Context manager yielding a :class:`FlopCounter` active for this context."""
    counter = FlopCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


def record_flops(kind: str, flops: float) -> None:
    counter = _counter.get()
    if counter is not None:
        counter.add(kind, flops)


def current_counter() -> FlopCounter | None:
    return _counter.get()


def cholesky(A: np.ndarray, kind: str = "cholesky") -> np.ndarray:
    """Lower Cholesky factor of symmetric ``A``.

    On failure, escalating jitter (1e-7, 1e-6, ... up to 1e-4) is added to the
    diagonal before giving up with :class:`NotPositiveDefinite`.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    record_flops(kind, n**3 / 3.0)
    extra = 0.0
    while True:
        try:
            if extra:
                A = A + extra * np.eye(n)
            return sla.cholesky(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            extra = BASE_JITTER * 10 if extra == 0.0 else extra * 10
            if extra > MAX_JITTER * (1 + 1e-12):
                raise NotPositiveDefinite(
                    f"matrix of size {n} not positive definite even with jitter {MAX_JITTER:g}"
                ) from None


def cho_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``(L L^T) X = B`` given the lower factor ``L``."""
    if L.shape[0] == 0:
        return np.zeros_like(np.asarray(B, dtype=float))
    return sla.cho_solve((L, True), B, check_finite=False)


def spd_inverse(A: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix through its Cholesky factor."""
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    L = cholesky(A, kind="inverse")
    Linv = sla.solve_triangular(L, np.eye(n), lower=True, check_finite=False)
    out = Linv.T @ Linv
    return 0.5 * (out + out.T)


def logdet_from_cholesky(L: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(L))))


class BlockTridiagCholesky:
    """Cholesky factor of a symmetric block-tridiagonal matrix.

    Parameters
    ----------
    diag : list of ndarray
        Diagonal blocks ``A[b, b]``.
    lower : list of ndarray
        Sub-diagonal blocks ``A[b + 1, b]``; ``len(lower) == len(diag) - 1``.
    """

    def __init__(self, diag: list[np.ndarray], lower: list[np.ndarray]):
        if len(lower) != max(len(diag) - 1, 0):
            raise ValueError("need exactly one sub-diagonal block per adjacent pair")
        self.sizes = [d.shape[0] for d in diag]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.L_diag: list[np.ndarray] = []
        self.L_low: list[np.ndarray] = []
        for b, D in enumerate(diag):
            if b > 0:
                Lprev = self.L_diag[b - 1]
                # L[b, b-1] = A[b, b-1] L[b-1, b-1]^{-T}
                Lbb1 = sla.solve_triangular(Lprev, lower[b - 1].T, lower=True, check_finite=False).T
                record_flops("block_tridiag", Lprev.shape[0] ** 2 * D.shape[0])
                record_flops("block_tridiag", 2.0 * D.shape[0] ** 2 * Lprev.shape[0])
                self.L_low.append(Lbb1)
                D = D - Lbb1 @ Lbb1.T
            self.L_diag.append(cholesky(D, kind="block_tridiag"))

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    def solve(self, R: np.ndarray) -> np.ndarray:
        """Solve ``A X = R`` by block forward and backward substitution."""
        R = np.asarray(R, dtype=float)
        vec = R.ndim == 1
        Z = R.reshape(self.n, -1).copy()
        nb = len(self.sizes)
        sl = [slice(self.offsets[b], self.offsets[b + 1]) for b in range(nb)]
        for b in range(nb):
            if b > 0:
                Z[sl[b]] -= self.L_low[b - 1] @ Z[sl[b - 1]]
            Z[sl[b]] = sla.solve_triangular(self.L_diag[b], Z[sl[b]], lower=True, check_finite=False)
        for b in reversed(range(nb)):
            if b < nb - 1:
                Z[sl[b]] -= self.L_low[b].T @ Z[sl[b + 1]]
            Z[sl[b]] = sla.solve_triangular(self.L_diag[b], Z[sl[b]], lower=True, trans="T",
                                            check_finite=False)
        return Z.reshape(-1) if vec else Z
