"""Posterior of the treatment effect under patchwork (boundary-constrained) local GPs.

Each propensity region ``k`` carries its own GP pair ``theta^k``, ``f^k``.
Neighbouring effect functions are tied together through latent boundary
differences ``delta_b(x) = theta^b(x) - theta^{b+1}(x)`` evaluated at pseudo
points on boundary ``b``; conditioning on ``delta = 0`` (together with the
outcomes) glues the local effect surfaces into one continuous estimate.

Variables are ordered ``(theta_n, theta_m, f_n, delta, y)``: effects at the
training and test inputs, baseline at the training inputs, boundary
differences and outcomes.  The prior covariance of the first four carries a
small nugget ``jitter`` on its diagonal.

Two numerically different routes produce the same posterior:

* ``route="structured"`` (default) conditions directly on ``D = (delta, y)``.
  The outcome covariance is block diagonal by region and the boundary block
  is block tridiagonal, so only region-sized and boundary-sized matrices are
  ever factorized.
* ``route="precision"`` follows the full chain prior covariance -> prior
  precision -> joint precision with the likelihood -> joint covariance ->
  conditioning, each step by nested Schur complements on dense blocks.  It
  is cubic in ``n + m`` and meant for moderate sizes and cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.stats import norm

from .data import Dataset, Partition, RegionHyperParams
from .errors import DimensionMismatch, EmptyRegion, InvalidInput
from .gp_core import gram
from .linalg import BASE_JITTER, BlockTridiagCholesky, cho_solve, cholesky, spd_inverse
from .pseudo import PseudoSet

ORDER = ("theta_n", "theta_m", "f_n", "delta", "y")


@dataclass(frozen=True)
class PosteriorHTE:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def interval(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        """Central Gaussian credible interval for every test point."""
        half = norm.ppf(0.5 + level / 2.0) * self.sd
        return self.mean - half, self.mean + half


# ---------------------------------------------------------------------------
# covariance rules for the boundary differences
# ---------------------------------------------------------------------------

def _check_pair(pair):
    k, l = pair
    if l != k + 1:
        raise InvalidInput(f"boundaries join consecutive regions only, got {pair}")
    return k, l


def delta_cross_cov(points, pair, j: int, X, gamma_theta) -> np.ndarray:
    """``Cov(delta_{k,l}(points), theta^j(X))``.

    ``+c_k`` when ``j == k``, ``-c_l`` when ``j == l``, zero otherwise, where
    ``c_r`` is the RBF kernel with region ``r``'s ``gamma_theta``.
    """
    k, l = _check_pair(pair)
    points = np.atleast_2d(points)
    X = np.atleast_2d(X)
    if j == k:
        return gram(points, X, gamma_theta[k])
    if j == l:
        return -gram(points, X, gamma_theta[l])
    return np.zeros((points.shape[0], X.shape[0]))


def delta_delta_cov(points1, pair1, points2, pair2, gamma_theta) -> np.ndarray:
    """``Cov(delta_{k,l}(points1), delta_{u,v}(points2))`` on a chain of regions.

    Same boundary: ``c_k + c_l``.  Shared middle region (``l == u``):
    ``-c_l``; (``k == v``): ``-c_k``.  Otherwise zero.
    """
    k, l = _check_pair(pair1)
    u, v = _check_pair(pair2)
    points1 = np.atleast_2d(points1)
    points2 = np.atleast_2d(points2)
    if (k, l) == (u, v):
        return gram(points1, points2, gamma_theta[k]) + gram(points1, points2, gamma_theta[l])
    if l == u:
        return -gram(points1, points2, gamma_theta[l])
    if k == v:
        return -gram(points1, points2, gamma_theta[k])
    return np.zeros((points1.shape[0], points2.shape[0]))


# ---------------------------------------------------------------------------
# prior assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockPriorCovariance:
    """Prior blocks over ``(theta_n, theta_m, f_n, delta)``, stored densely.

    The effect and baseline blocks are block diagonal by region, the
    effect/boundary blocks are banded and ``delta_delta`` is block
    tridiagonal; zeros are kept explicitly.
    """

    theta_nn: np.ndarray
    theta_nm: np.ndarray
    theta_mm: np.ndarray
    theta_n_delta: np.ndarray
    theta_m_delta: np.ndarray
    f_nn: np.ndarray
    delta_delta: np.ndarray

    @property
    def sizes(self) -> dict[str, int]:
        return {
            "theta_n": self.theta_nn.shape[0],
            "theta_m": self.theta_mm.shape[0],
            "f_n": self.f_nn.shape[0],
            "delta": self.delta_delta.shape[0],
        }

    def as_blocks(self) -> "SymBlockMatrix":
        return SymBlockMatrix(
            ORDER[:4],
            self.sizes,
            {
                ("theta_n", "theta_n"): self.theta_nn,
                ("theta_n", "theta_m"): self.theta_nm,
                ("theta_m", "theta_m"): self.theta_mm,
                ("theta_n", "delta"): self.theta_n_delta,
                ("theta_m", "delta"): self.theta_m_delta,
                ("f_n", "f_n"): self.f_nn,
                ("delta", "delta"): self.delta_delta,
            },
        )

    def assemble(self) -> np.ndarray:
        return self.as_blocks().assemble()


@dataclass
class SymBlockMatrix:
    """Symmetric matrix held as named blocks; missing blocks are zero.

    ``blocks[(a, b)]`` holds rows of variable ``a`` and columns of ``b``; the
    transpose is served for ``(b, a)``.
    """

    order: tuple[str, ...]
    sizes: dict[str, int]
    blocks: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def get(self, a: str, b: str) -> np.ndarray:
        if (a, b) in self.blocks:
            return self.blocks[(a, b)]
        if (b, a) in self.blocks:
            return self.blocks[(b, a)].T
        return np.zeros((self.sizes[a], self.sizes[b]))

    def has(self, a: str, b: str) -> bool:
        return (a, b) in self.blocks or (b, a) in self.blocks

    def assemble(self, names=None) -> np.ndarray:
        names = tuple(self.order if names is None else names)
        return np.block([[self.get(a, b) for b in names] for a in names])

    def offsets(self, names=None) -> dict[str, slice]:
        names = tuple(self.order if names is None else names)
        out, start = {}, 0
        for a in names:
            out[a] = slice(start, start + self.sizes[a])
            start += self.sizes[a]
        return out


PrecisionBlocks = SymBlockMatrix
JointPrecision = SymBlockMatrix
JointCovariance = SymBlockMatrix


def _regions_of(labels, K):
    return [np.flatnonzero(labels == k) for k in range(K)]


def _validate(train: Dataset, X_test, test_regions, partition: Partition, hyperparams, pseudo):
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    if X_test.shape[0] and X_test.shape[1] != train.p:
        raise DimensionMismatch(f"test covariates have {X_test.shape[1]} columns, expected {train.p}")
    test_regions = np.asarray(test_regions, dtype=np.int64).reshape(-1)
    if test_regions.size != X_test.shape[0]:
        raise DimensionMismatch("one region label per test point required")
    K = partition.K
    if partition.assignment.size != train.n:
        raise DimensionMismatch("partition does not match the training data")
    if len(hyperparams) != K:
        raise DimensionMismatch(f"{len(hyperparams)} hyperparameter sets for {K} regions")
    if np.any(partition.sizes() == 0):
        raise EmptyRegion("every region needs training samples")
    if test_regions.size and (test_regions.min() < 0 or test_regions.max() >= K):
        raise InvalidInput("test region label out of range")
    if K > 1:
        if pseudo is None or pseudo.points.shape[0] == 0:
            raise InvalidInput("pseudo points are required when K > 1")
        counts = np.bincount(pseudo.boundary_index, minlength=K - 1)
        if counts.size != K - 1 or np.any(counts == 0):
            raise InvalidInput("pseudo points must cover every boundary")
        if pseudo.points.shape[1] != train.p:
            raise DimensionMismatch("pseudo points have the wrong number of columns")
    return X_test, test_regions


def _pseudo_parts(pseudo: PseudoSet | None, K: int, p: int):
    if K == 1 or pseudo is None:
        return np.empty((0, p)), np.empty(0, dtype=np.int64)
    # boundary-major ordering is relied on below
    order = np.argsort(pseudo.boundary_index, kind="stable")
    return pseudo.points[order], pseudo.boundary_index[order]


def build_prior(train: Dataset, X_test, test_regions, partition: Partition,
                hyperparams: list[RegionHyperParams], pseudo: PseudoSet | None, *,
                jitter: float = BASE_JITTER, decouple: bool = False) -> BlockPriorCovariance:
    """Assemble the prior over ``(theta_n, theta_m, f_n, delta)``.

    ``decouple=True`` zeros every effect/boundary cross-covariance, which turns
    the model into independent local GPs (a test hook).
    """
    X_test, test_regions = _validate(train, X_test, test_regions, partition, hyperparams, pseudo)
    K = partition.K
    P, plab = _pseudo_parts(pseudo, K, train.p)
    gt = [hp.gamma_theta for hp in hyperparams]
    gf = [hp.gamma_f for hp in hyperparams]
    n, m, nd = train.n, X_test.shape[0], P.shape[0]
    tr = _regions_of(partition.assignment, K)
    te = _regions_of(test_regions, K)
    bd = _regions_of(plab, K - 1)

    theta_nn = np.zeros((n, n))
    theta_nm = np.zeros((n, m))
    theta_mm = np.zeros((m, m))
    f_nn = np.zeros((n, n))
    theta_n_delta = np.zeros((n, nd))
    theta_m_delta = np.zeros((m, nd))
    delta_delta = np.zeros((nd, nd))
    for k in range(K):
        Xk, Zk = train.X[tr[k]], X_test[te[k]]
        theta_nn[np.ix_(tr[k], tr[k])] = gram(Xk, Xk, gt[k])
        theta_nm[np.ix_(tr[k], te[k])] = gram(Xk, Zk, gt[k])
        theta_mm[np.ix_(te[k], te[k])] = gram(Zk, Zk, gt[k])
        f_nn[np.ix_(tr[k], tr[k])] = gram(Xk, Xk, gf[k])
    for b in range(K - 1):
        pair = (b, b + 1)
        Pb = P[bd[b]]
        if not decouple:
            for j in pair:
                theta_n_delta[np.ix_(tr[j], bd[b])] = delta_cross_cov(Pb, pair, j, train.X[tr[j]], gt).T
                theta_m_delta[np.ix_(te[j], bd[b])] = delta_cross_cov(Pb, pair, j, X_test[te[j]], gt).T
        for c in range(max(b - 1, 0), min(b + 2, K - 1)):
            delta_delta[np.ix_(bd[b], bd[c])] = delta_delta_cov(Pb, pair, P[bd[c]], (c, c + 1), gt)
    for M in (theta_nn, theta_mm, f_nn, delta_delta):
        M[np.diag_indices_from(M)] += jitter
    return BlockPriorCovariance(theta_nn, theta_nm, theta_mm, theta_n_delta, theta_m_delta, f_nn,
                                delta_delta)


# ---------------------------------------------------------------------------
# precision route
# ---------------------------------------------------------------------------

def prior_precision(prior: BlockPriorCovariance) -> PrecisionBlocks:
    """Inverse of the prior covariance by nested Schur complements.

    The boundary block is eliminated first; the remaining effect blocks form
    a 2x2 system over (train, test) inverted by a second Schur complement,
    and the baseline block is inverted on its own because it couples with
    nothing.  Each Schur complement ``A - B D^{-1} B^T`` is formed as
    ``A - W^T W`` with ``W = L^{-1} B^T`` from the Cholesky factor of ``D``
    (block Cholesky), which stays accurate when the effect Grams are nearly
    singular.
    """
    Snn, Snm, Smm = prior.theta_nn, prior.theta_nm, prior.theta_mm
    Snd, Smd, Sdd = prior.theta_n_delta, prior.theta_m_delta, prior.delta_delta
    n = Snn.shape[0]

    Ld = cholesky(Sdd, kind="inverse")
    Wn = _tri_solve(Ld, Snd.T)
    Wm = _tri_solve(Ld, Smd.T)
    A11 = Snn - Wn.T @ Wn
    A12 = Snm - Wn.T @ Wm
    A22 = Smm - Wm.T @ Wm

    L22 = cholesky(A22, kind="inverse")
    V = _tri_solve(L22, A12.T)
    P_nn = spd_inverse(_sym(A11 - V.T @ V))
    G = cho_solve(L22, A12.T).T  # A12 A22^{-1}
    P_nm = -P_nn @ G
    P_mm = _chol_inverse(L22) + G.T @ P_nn @ G
    P_ff = spd_inverse(prior.f_nn)

    # with Z = S_theta_delta S_dd^{-1}:  P_theta_delta = -P_theta Z,
    # P_dd = S_dd^{-1} + Z^T P_theta Z
    P_theta = np.block([[P_nn, P_nm], [P_nm.T, P_mm]])
    Z = cho_solve(Ld, np.vstack([Snd, Smd]).T).T
    PZ = P_theta @ Z
    P_nd, P_md = -PZ[:n], -PZ[n:]
    P_dd = _chol_inverse(Ld) + Z.T @ PZ

    return SymBlockMatrix(
        ORDER[:4],
        prior.sizes,
        {
            ("theta_n", "theta_n"): _sym(P_nn),
            ("theta_n", "theta_m"): P_nm,
            ("theta_m", "theta_m"): _sym(P_mm),
            ("theta_n", "delta"): P_nd,
            ("theta_m", "delta"): P_md,
            ("f_n", "f_n"): P_ff,
            ("delta", "delta"): _sym(P_dd),
        },
    )


def joint_precision(prec: PrecisionBlocks, t, s_eps) -> JointPrecision:
    """Precision of ``(theta_n, theta_m, f_n, delta, y)`` under the Gaussian likelihood.

    Completing the square in ``s (y - T theta_n - f_n)^2`` adds ``s T^2``,
    ``s T`` and ``s`` on the effect/baseline blocks and ``-s T``, ``-s`` on
    their coupling with ``y``.  ``s_eps`` may be a scalar or one precision
    per sample.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    n = prec.sizes["theta_n"]
    if t.size != n:
        raise DimensionMismatch(f"{t.size} treatment entries for {n} training points")
    s = np.broadcast_to(np.asarray(s_eps, dtype=float), (n,)).copy()
    st = np.diag(s * t)
    blocks = {key: val.copy() for key, val in prec.blocks.items()}
    blocks[("theta_n", "theta_n")] = prec.get("theta_n", "theta_n") + np.diag(s * t**2)
    blocks[("theta_n", "f_n")] = prec.get("theta_n", "f_n") + st
    blocks[("theta_n", "y")] = -st
    blocks[("f_n", "f_n")] = prec.get("f_n", "f_n") + np.diag(s)
    blocks[("f_n", "y")] = -np.diag(s)
    blocks[("y", "y")] = np.diag(s)
    sizes = dict(prec.sizes, y=n)
    return SymBlockMatrix(ORDER, sizes, blocks)


def _inv(A: np.ndarray) -> np.ndarray:
    if A.size and np.count_nonzero(A - np.diag(np.diag(A))) == 0:
        return np.diag(1.0 / np.diag(A))
    return spd_inverse(A)


def joint_covariance(jp: JointPrecision, lazy: bool = False) -> JointCovariance:
    """Invert the joint precision by peeling ``y``, then ``delta``, then ``f_n``.

    With ``lazy=True`` only the blocks conditioning needs are returned: the
    test-effect rows and the square over ``D = (delta, y)``.
    """
    outer = ORDER[:4]
    get = jp.get
    D_inv = _inv(get("y", "y"))
    Bc = {a: get(a, "y") for a in outer}
    BD = {a: Bc[a] @ D_inv for a in outer}

    # M = A - B D^{-1} C over (theta_n, theta_m, f_n, delta)
    M = {(a, b): get(a, b) - BD[a] @ Bc[b].T for i, a in enumerate(outer) for b in outer[i:]}
    Mg = lambda a, b: M[(a, b)] if (a, b) in M else M[(b, a)].T  # noqa: E731

    # peel delta
    three = ORDER[:3]
    D1_inv = spd_inverse(Mg("delta", "delta"))
    B1D = {a: Mg(a, "delta") @ D1_inv for a in three}
    M1 = {(a, b): Mg(a, b) - B1D[a] @ Mg(b, "delta").T for i, a in enumerate(three) for b in three[i:]}

    # peel f_n
    D2_inv = spd_inverse(M1[("f_n", "f_n")])
    B2D = {a: M1[(a, "f_n")] @ D2_inv for a in ("theta_n", "theta_m")}
    A3 = M1[("theta_n", "theta_n")] - B2D["theta_n"] @ M1[("theta_n", "f_n")].T
    B3 = M1[("theta_n", "theta_m")] - B2D["theta_n"] @ M1[("theta_m", "f_n")].T
    D3 = M1[("theta_m", "theta_m")] - B2D["theta_m"] @ M1[("theta_m", "f_n")].T

    # 2x2 effect block over (theta_n, theta_m)
    D3_inv = spd_inverse(D3)
    S_nn = spd_inverse(A3 - B3 @ D3_inv @ B3.T)
    S_nm = -S_nn @ B3 @ D3_inv
    S_mm = D3_inv + D3_inv @ B3.T @ S_nn @ B3 @ D3_inv
    Q = {("theta_n", "theta_n"): S_nn, ("theta_n", "theta_m"): S_nm, ("theta_m", "theta_m"): S_mm}
    Qg = lambda a, b: Q[(a, b)] if (a, b) in Q else Q[(b, a)].T  # noqa: E731

    # undo the f_n peel
    R = dict(Q)
    for a in ("theta_n", "theta_m"):
        R[(a, "f_n")] = -sum(Qg(a, c) @ B2D[c] for c in ("theta_n", "theta_m"))
    R[("f_n", "f_n")] = D2_inv + sum(
        B2D[c].T @ Qg(c, e) @ B2D[e] for c in ("theta_n", "theta_m") for e in ("theta_n", "theta_m")
    )
    Rg = lambda a, b: R[(a, b)] if (a, b) in R else R[(b, a)].T  # noqa: E731

    # undo the delta peel
    P = dict(R)
    for a in three:
        P[(a, "delta")] = -sum(Rg(a, c) @ B1D[c] for c in three)
    P[("delta", "delta")] = D1_inv - sum(B1D[c].T @ P[(c, "delta")] for c in three)
    Pg = lambda a, b: P[(a, b)] if (a, b) in P else P[(b, a)].T  # noqa: E731

    # undo the y peel;  B is nonzero only on theta_n and f_n
    coupled = [a for a in outer if np.any(Bc[a])]
    rows = ("theta_m", "delta") if lazy else outer
    Y = {a: -sum(Pg(a, c) @ BD[c] for c in coupled) if coupled else np.zeros((jp.sizes[a], jp.sizes["y"]))
         for a in rows}
    full_y = Y if not lazy else {c: -sum(Pg(c, e) @ BD[e] for e in coupled) for c in coupled}
    S_yy = D_inv - sum(BD[c].T @ full_y[c] for c in coupled) if coupled else D_inv

    if lazy:
        blocks = {
            ("theta_m", "theta_m"): _sym(Pg("theta_m", "theta_m")),
            ("theta_m", "delta"): Pg("theta_m", "delta"),
            ("theta_m", "y"): Y["theta_m"],
            ("delta", "delta"): _sym(Pg("delta", "delta")),
            ("delta", "y"): Y["delta"],
            ("y", "y"): _sym(S_yy),
        }
    else:
        blocks = {}
        for i, a in enumerate(outer):
            for b in outer[i:]:
                blocks[(a, b)] = _sym(Pg(a, b)) if a == b else Pg(a, b)
            blocks[(a, "y")] = Y[a]
        blocks[("y", "y")] = _sym(S_yy)
    return SymBlockMatrix(ORDER, dict(jp.sizes), blocks)


def condition_on_data(jc: JointCovariance, y) -> PosteriorHTE:
    """Condition the test effects on ``y`` and ``delta = 0``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    S_DD = jc.assemble(("delta", "y"))
    S_mD = np.hstack([jc.get("theta_m", "delta"), jc.get("theta_m", "y")])
    D = np.concatenate([np.zeros(jc.sizes["delta"]), y])
    L = cholesky(S_DD, kind="condition")
    mean = S_mD @ cho_solve(L, D)
    cov = jc.get("theta_m", "theta_m") - S_mD @ cho_solve(L, S_mD.T)
    return PosteriorHTE(mean, _sym(cov))


# ---------------------------------------------------------------------------
# structured route
# ---------------------------------------------------------------------------

def _structured(train: Dataset, X_test, test_regions, partition: Partition, hyperparams, pseudo,
                jitter: float, decouple: bool) -> PosteriorHTE:
    K = partition.K
    P, plab = _pseudo_parts(pseudo, K, train.p)
    gt = [hp.gamma_theta for hp in hyperparams]
    m, nd = X_test.shape[0], P.shape[0]
    tr = _regions_of(partition.assignment, K)
    te = _regions_of(test_regions, K)
    bd = _regions_of(plab, K - 1)

    mean = np.zeros(m)
    cov = np.zeros((m, m))
    H = np.zeros((m, nd))
    r = np.zeros(nd)
    S_diag = []
    S_low = []
    for b in range(K - 1):
        Pb = P[bd[b]]
        blk = delta_delta_cov(Pb, (b, b + 1), Pb, (b, b + 1), gt)
        blk[np.diag_indices_from(blk)] += jitter
        S_diag.append(blk)
        if b + 1 < K - 1:
            S_low.append(delta_delta_cov(P[bd[b + 1]], (b + 1, b + 2), Pb, (b, b + 1), gt))

    for k in range(K):
        hp = hyperparams[k]
        Xk, Zk = train.X[tr[k]], X_test[te[k]]
        tk = train.t[tr[k]].astype(float)
        Y = tk[:, None] * gram(Xk, Xk, gt[k]) * tk[None, :] + gram(Xk, Xk, hp.gamma_f)
        Y[np.diag_indices_from(Y)] += jitter * (tk**2 + 1.0) + 1.0 / hp.s_eps
        L = cholesky(Y, kind="region")
        a = cho_solve(L, train.y[tr[k]])

        G = tk[:, None] * gram(Xk, Zk, gt[k])  # Cov(y_k, theta_m in region k)
        YG = cho_solve(L, G)
        mean[te[k]] = G.T @ a
        Cmm = gram(Zk, Zk, gt[k])
        Cmm[np.diag_indices_from(Cmm)] += jitter
        cov[np.ix_(te[k], te[k])] = Cmm - G.T @ YG
        if decouple:
            continue

        near = [b for b in (k - 1, k) if 0 <= b < K - 1]
        W = {b: tk[:, None] * delta_cross_cov(P[bd[b]], (b, b + 1), k, Xk, gt).T for b in near}
        YW = {b: cho_solve(L, W[b]) for b in near}
        for b in near:
            r[bd[b]] += W[b].T @ a
            H[np.ix_(te[k], bd[b])] = delta_cross_cov(P[bd[b]], (b, b + 1), k, Zk, gt).T - G.T @ YW[b]
            S_diag[b] = S_diag[b] - W[b].T @ YW[b]
        if len(near) == 2:
            # region k sits between boundaries k-1 and k
            S_low[k - 1] = S_low[k - 1] - W[k].T @ YW[k - 1]

    if K > 1 and not decouple:
        fac = BlockTridiagCholesky(S_diag, S_low)
        mean = mean - H @ fac.solve(r)
        cov = cov - H @ fac.solve(H.T)
    return PosteriorHTE(mean, _sym(cov))


def posterior_hte(train: Dataset, X_test, test_regions, partition: Partition,
                  hyperparams: list[RegionHyperParams], pseudo: PseudoSet | None, *,
                  route: str = "structured", jitter: float = BASE_JITTER,
                  decouple: bool = False) -> PosteriorHTE:
    """Posterior mean and covariance of the treatment effect at ``X_test``.

    Parameters
    ----------
    train : Dataset
    X_test : ndarray, shape (m, p)
    test_regions : ndarray of int, shape (m,)
        Region of each test point (normally from its estimated propensity).
    partition : Partition
        Training-sample regions and cutoffs.
    hyperparams : list of RegionHyperParams
        One set per region.
    pseudo : PseudoSet or None
        Boundary points; ignored when ``K == 1``.
    route : {"structured", "precision"}
    decouple : bool
        Drop all boundary coupling (independent local GPs).
    """
    X_test, test_regions = _validate(train, X_test, test_regions, partition, hyperparams, pseudo)
    if route == "structured":
        return _structured(train, X_test, test_regions, partition, hyperparams, pseudo, jitter, decouple)
    if route == "precision":
        prior = build_prior(train, X_test, test_regions, partition, hyperparams, pseudo,
                            jitter=jitter, decouple=decouple)
        s = np.array([hyperparams[k].s_eps for k in partition.assignment])
        jp = joint_precision(prior_precision(prior), train.t, s)
        return condition_on_data(joint_covariance(jp, lazy=True), train.y)
    raise InvalidInput(f"unknown route {route!r}")


def _tri_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    if L.shape[0] == 0:
        return np.zeros((0, B.shape[1]))
    return sla.solve_triangular(L, B, lower=True, check_finite=False)


def _chol_inverse(L: np.ndarray) -> np.ndarray:
    Linv = _tri_solve(L, np.eye(L.shape[0]))
    return _sym(Linv.T @ Linv)


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)
