"""Exact full Gaussian-process conditioning, Kriging sub-models and sampling.

The full model is the O(n^3) oracle every aggregation method is judged
against.  The sub-model bank holds the per-group Cholesky factors and
Kriging weights of the p experts and evaluates, at any query point, the
expert means together with all expert/process cross-covariances.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import linalg as sla

from . import kernels
from .exceptions import DimensionMismatch
from .kernels import KernelSpec
from .linalg import SpdFactor, factor_spd, solve

# variance ratio below which a direction counts as deterministic when sampling
DEGENERATE_VAR_RTOL = 1e-12


class Layer1(NamedTuple):
    """Expert statistics at a batch of query points.

    M : (q, p) expert means
    k : (q, p) covariances Cov(M_i(x), Y(x))
    K : (q, p, p) cross-covariances Cov(M_i(x), M_j(x))
    """

    M: np.ndarray
    k: np.ndarray
    K: np.ndarray


def fill_expert_cross_cov(kernel: KernelSpec, Xcat, starts, weights, out):
    """Fill the off-diagonal expert covariances a_g' k(X_g, X_h) a_h.

    ``Xcat`` holds the design points in group-major order, ``starts`` the p
    block starts, ``weights`` one (c_g, q) weight matrix per group and
    ``out`` is the (q, p, p) target whose diagonal is already set.  Groups
    are processed one block row at a time: a single covariance block
    against all earlier groups, one matrix product and one segmented
    reduction, so the Python overhead is linear in p while the arithmetic
    stays at sum c_g c_h q.  Query-major layout with fixed scratch pools
    keeps every pass streaming over the same contiguous pages.
    """
    p = len(starts)
    if p <= 1:
        return
    q = weights[0].shape[1]
    stackedT = np.ascontiguousarray(np.vstack(weights).T)
    bounds = np.concatenate([starts, [Xcat.shape[0]]])
    c_max = int(np.diff(bounds).max())
    m_max = int(starts[-1])
    bpool = np.empty(c_max * m_max)
    spool = np.empty(c_max * m_max)
    wpool = np.empty(q * m_max)
    for g in range(1, p):
        stop = int(starts[g])
        c = int(bounds[g + 1] - bounds[g])
        B = bpool[:c * stop].reshape(c, stop)
        S = spool[:c * stop].reshape(c, stop)
        kernels.cross_matrix_into(kernel, Xcat[stop:stop + c], Xcat[:stop], B, S)
        W = wpool[:q * stop].reshape(q, stop)
        np.matmul(weights[g].T, B, out=W)
        W *= stackedT[:, :stop]
        seg = np.add.reduceat(W, starts[:g], axis=1)
        out[:, g, :g] = seg
        out[:, :g, g] = seg


class FullModel:
    """Exact zero-mean Gaussian-process regression on all n points."""

    def __init__(self, kernel: KernelSpec, X, y):
        self.kernel = kernel
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise DimensionMismatch("X and y row counts differ")
        if self.X.shape[1] != kernel.dim:
            raise DimensionMismatch("X dimension does not match the kernel")
        self.factor: SpdFactor = factor_spd(kernels.cross_matrix(kernel, self.X, self.X))
        self.alpha = solve(self.factor, self.y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def _check_query(self, Xq) -> np.ndarray:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        if Xq.shape[1] != self.kernel.dim:
            raise DimensionMismatch("query dimension does not match the kernel")
        return Xq

    def predict(self, Xq):
        """Posterior means and variances at query points, (q,) and (q,).

        Variances are clamped at zero from below.
        """
        Xq = self._check_query(Xq)
        C = kernels.cross_matrix(self.kernel, self.X, Xq)
        means = C.T @ self.alpha
        V = sla.solve_triangular(self.factor.lower, C, lower=True)
        variances = np.maximum(self.kernel.variance - np.sum(V * V, axis=0), 0.0)
        return means, variances

    def cond_cov(self, Xq):
        """Posterior covariance matrix at query points, (q, q)."""
        Xq = self._check_query(Xq)
        C = kernels.cross_matrix(self.kernel, self.X, Xq)
        V = sla.solve_triangular(self.factor.lower, C, lower=True)
        cov = kernels.cross_matrix(self.kernel, Xq, Xq) - V.T @ V
        return 0.5 * (cov + cov.T)

    def posterior(self, Xq):
        return self.predict(Xq)[0], self.cond_cov(Xq)


class SubModelBank:
    """Simple-Kriging sub-models over the groups of a partition.

    Stores one Cholesky factor and one weight vector per group; never
    forms any matrix across the full design.  Internally the design is
    kept in group-major order so per-group data are contiguous slices.
    """

    def __init__(self, kernel: KernelSpec, X, y, partition):
        self.kernel = kernel
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.X.shape[1] != kernel.dim:
            raise DimensionMismatch("X dimension does not match the kernel")
        if partition.n != self.X.shape[0]:
            raise DimensionMismatch("partition length does not match X")
        self.groups = partition.groups()
        self.point_order = np.concatenate(self.groups)
        self._Xc = np.ascontiguousarray(self.X[self.point_order])
        sizes = np.array([len(g) for g in self.groups])
        self._starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self._spans = [(int(s), int(s + c)) for s, c in zip(self._starts, sizes)]
        self.factors = []
        self.weights = []
        self.inverses = []
        for lo, hi in self._spans:
            Kg = kernels.cross_matrix(kernel, self._Xc[lo:hi], self._Xc[lo:hi])
            fac = factor_spd(Kg)
            self.factors.append(fac)
            self.weights.append(solve(fac, self.y[self.point_order[lo:hi]]))
            # explicit inverse turns per-query weight solves into one
            # batched matrix product across equal-sized groups
            self.inverses.append(solve(fac, np.eye(hi - lo)))

    @property
    def p(self) -> int:
        return len(self.groups)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def _check_query(self, Xq) -> np.ndarray:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        if Xq.shape[1] != self.kernel.dim:
            raise DimensionMismatch("query dimension does not match the kernel")
        return Xq

    def group_weights(self, Xq) -> list:
        """Kriging weight matrices a_i = k(X_i, X_i)^-1 k(X_i, Xq), one (c_i, q) per group.

        Weight rows follow the index order of ``groups[i]``.
        """
        Xq = self._check_query(Xq)
        # one covariance evaluation against the whole design (n x q, never
        # n x n), sliced per group
        C_all = kernels.cross_matrix(self.kernel, self._Xc, Xq)
        return [inv @ C_all[lo:hi]
                for (lo, hi), inv in zip(self._spans, self.inverses)]

    def layer1(self, Xq) -> Layer1:
        """Expert means and cross-covariances at a batch of query points.

        Group pairs are visited one block row at a time, so the peak
        footprint stays at O(n q) plus the (q, p, p) output; nothing of
        size n x n is ever allocated.  Equal-sized groups share one batched
        matrix product.
        """
        Xq = self._check_query(Xq)
        q, p = Xq.shape[0], self.p
        M = np.empty((q, p))
        kM = np.empty((q, p))
        K = np.empty((q, p, p))
        weights: list = [None] * p
        C_all = kernels.cross_matrix(self.kernel, self._Xc, Xq)
        by_size: dict = {}
        for g, (lo, hi) in enumerate(self._spans):
            by_size.setdefault(hi - lo, []).append(g)
        diag = np.arange(p)
        for size, members in by_size.items():
            runs = members[0] + np.arange(len(members))
            contiguous = np.array_equal(members, runs)
            if contiguous:
                lo = self._spans[members[0]][0]
                C_st = C_all[lo:lo + size * len(members)].reshape(
                    len(members), size, q)
            else:
                C_st = np.stack([C_all[slice(*self._spans[g])] for g in members])
            I_st = np.stack([self.inverses[g] for g in members])
            A_st = np.matmul(I_st, C_st)
            w_st = np.stack([self.weights[g] for g in members])
            M[:, members] = np.einsum("gcq,gc->qg", C_st, w_st)
            k_blk = np.sum(A_st * C_st, axis=1)
            kM[:, members] = k_blk.T
            for j, g in enumerate(members):
                weights[g] = A_st[j]
        # Cov(M_g, M_g) equals Cov(M_g, Y) for Kriging experts
        K[:, diag, diag] = kM
        fill_expert_cross_cov(self.kernel, self._Xc, self._starts, weights, K)
        return Layer1(M=M, k=kM, K=K)


def submodel_predict(bank: SubModelBank, x):
    """Expert statistics at a single point: (M, kM, KM) of shapes (p,), (p,), (p, p)."""
    L1 = bank.layer1(np.atleast_2d(np.asarray(x, dtype=float)))
    return L1.M[0], L1.k[0], L1.K[0]


def sample_gaussian(mean, cov, count: int, seed, var_scale: float = 0.0) -> np.ndarray:
    """Draws from N(mean, cov), shape (count, q); deterministic given seed.

    Directions whose variance is negligible relative to ``var_scale`` (or,
    failing that, to the largest diagonal entry) are treated as
    deterministic, so conditional draws reproduce interpolated values
    exactly instead of carrying round-off noise.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    qn = mean.shape[0]
    if cov.shape != (qn, qn):
        raise DimensionMismatch("covariance shape does not match the mean")
    out = np.tile(mean, (count, 1))
    if count == 0:
        return out
    diag = np.diag(cov)
    top = diag.max(initial=0.0)
    if top <= 0.0:
        return out
    active = diag > DEGENERATE_VAR_RTOL * max(top, var_scale)
    if not np.any(active):
        return out
    sub = cov[np.ix_(active, active)]
    fac = factor_spd(sub)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, int(active.sum())))
    out[:, active] += z @ fac.lower.T
    return out


def sample_paths(kernel: KernelSpec, Xgrid, count: int, seed) -> np.ndarray:
    """Zero-mean prior draws on a grid, shape (count, q)."""
    Xgrid = np.atleast_2d(np.asarray(Xgrid, dtype=float))
    cov = kernels.cross_matrix(kernel, Xgrid, Xgrid)
    return sample_gaussian(np.zeros(Xgrid.shape[0]), cov, count, seed)


def sample_conditional(model, Xgrid, count: int, seed) -> np.ndarray:
    """Posterior draws from any model exposing ``posterior(Xq) -> (mean, cov)``."""
    mean, cov = model.posterior(Xgrid)
    scale = getattr(getattr(model, "kernel", None), "variance", 0.0)
    return sample_gaussian(mean, cov, count, seed, var_scale=scale)
