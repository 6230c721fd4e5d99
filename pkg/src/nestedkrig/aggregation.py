"""Optimal pointwise aggregation of sub-models and the aggregated-process view.

The pointwise combination is the best linear unbiased combination of the
expert values: weights solve K_M(x) a = k_M(x), the aggregated mean is
a' M(x) and its mean squared error is k(x,x) - a' k_M(x).  The process view
wraps the same weights into a valid covariance so that posterior
cross-covariances and conditional sample paths are available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import kernels
from .exceptions import DimensionMismatch
from .gpcore import FullModel, SubModelBank, fill_expert_cross_cov
from .linalg import factor_spd, solve, solve_weights


@dataclass(frozen=True)
class AggregatedPrediction:
    """One aggregated prediction: mean, variance and the expert weights used.

    ``degenerate`` is True when the expert covariance was singular and the
    minimum-norm (pseudo-inverse) weights were used instead.
    """

    mean: float
    variance: float
    weights: np.ndarray
    degenerate: bool = False


def aggregate(kxx: float, M, kM, KM) -> AggregatedPrediction:
    """Combine expert values into the BLUE of the latent process value.

    Parameters
    ----------
    kxx : float
        Prior variance k(x, x) at the prediction point.
    M, kM : (p,) arrays
        Expert values and their covariances with the process value.
    KM : (p, p) array
        Expert cross-covariance matrix (symmetric PSD).

    No Gaussian or Kriging assumption is made: any covariates with known
    first two moments can be fed here (noisy regression experts, gradients,
    black-box responses, ...).
    """
    M = np.asarray(M, dtype=float).reshape(-1)
    kM = np.asarray(kM, dtype=float).reshape(-1)
    KM = np.asarray(KM, dtype=float)
    p = M.shape[0]
    if kM.shape[0] != p or KM.shape != (p, p):
        raise DimensionMismatch(
            f"expert inputs of sizes {M.shape}, {kM.shape}, {KM.shape}")
    if not kxx > 0.0:
        raise ValueError("prior variance kxx must be positive")
    alpha, degenerate = solve_weights(KM, kM)
    mean = float(alpha @ M)
    variance = max(float(kxx - alpha @ kM), 0.0)
    return AggregatedPrediction(mean=mean, variance=variance, weights=alpha,
                                degenerate=bool(degenerate))


class AggregatedProcess:
    """Process whose exact posterior reproduces the aggregated predictions.

    Its prior covariance agrees with the original kernel on the diagonal
    and, for interpolating experts, on all design-point pairs; conditioning
    it on the observations returns the aggregated means and variances along
    with full posterior cross-covariances.  This view is a desk-scale tool:
    it factors an n x n matrix and brings no computational gain.
    """

    def __init__(self, bank: SubModelBank):
        self.bank = bank
        self.kernel = bank.kernel

    def _stats(self, Z):
        """Per-point weighted expert loadings V_i and covariance rows C_i."""
        bank = self.bank
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        m, p = Z.shape[0], bank.p
        A, C = [], []
        kM = np.empty((m, p))
        KM = np.empty((m, p, p))
        C_all = kernels.cross_matrix(bank.kernel, bank._Xc, Z)
        for g, ((lo, hi), fac) in enumerate(zip(bank._spans, bank.factors)):
            Cg = C_all[lo:hi]
            Ag = solve(fac, Cg)
            A.append(Ag)
            C.append(Cg)
            kM[:, g] = np.sum(Ag * Cg, axis=0)
            KM[:, g, g] = kM[:, g]
        fill_expert_cross_cov(bank.kernel, bank._Xc, bank._starts, A, KM)
        alpha, _ = solve_weights(KM, kM)
        V = [A[g] * alpha[:, g] for g in range(p)]
        return V, C

    def prior_cov(self, Za, Zb) -> np.ndarray:
        """Prior covariance matrix of the aggregated process, (ma, mb)."""
        bank = self.bank
        Za = np.atleast_2d(np.asarray(Za, dtype=float))
        Zb = np.atleast_2d(np.asarray(Zb, dtype=float))
        Va, Ca = self._stats(Za)
        if Zb.shape == Za.shape and np.array_equal(Za, Zb):
            Vb, Cb = Va, Ca
        else:
            Vb, Cb = self._stats(Zb)
        quad = np.zeros((Za.shape[0], Zb.shape[0]))
        for g, sg in enumerate(bank._spans):
            for h, sh in enumerate(bank._spans):
                B = kernels.cross_matrix(bank.kernel, bank._Xc[sg[0]:sg[1]],
                                         bank._Xc[sh[0]:sh[1]])
                quad += Va[g].T @ B @ Vb[h]
        cross_ab = sum(Va[g].T @ Cb[g] for g in range(bank.p))
        cross_ba = sum(Vb[g].T @ Ca[g] for g in range(bank.p))
        out = kernels.cross_matrix(bank.kernel, Za, Zb) \
            + 2.0 * quad - cross_ab - cross_ba.T
        # variance preservation holds identically; enforce it on coincident
        # arguments so the diagonal is exact
        same = np.all(Za[:, None, :] == Zb[None, :, :], axis=-1)
        out[same] = self.kernel.variance
        return out

    def cov(self, x, x2) -> float:
        """Prior covariance between two points."""
        return float(self.prior_cov(np.atleast_2d(x), np.atleast_2d(x2))[0, 0])

    def posterior(self, Xq, X=None, f=None):
        """Condition the aggregated process on observed values.

        ``X`` and ``f`` default to the bank's own design and responses.
        Returns (means, cond_cov) at the query points.
        """
        X = self.bank.X if X is None else np.atleast_2d(np.asarray(X, dtype=float))
        f = self.bank.y if f is None else np.asarray(f, dtype=float).reshape(-1)
        if X.shape[0] != f.shape[0]:
            raise DimensionMismatch("conditioning X and f row counts differ")
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        fac = factor_spd(self.prior_cov(X, X))
        KqX = self.prior_cov(Xq, X)
        means = KqX @ solve(fac, f)
        cov = self.prior_cov(Xq, Xq) - KqX @ solve(fac, KqX.T)
        return means, 0.5 * (cov + cov.T)


def aggregate_process_cov(bank: SubModelBank, x, x2) -> float:
    """Prior covariance of the aggregated process between two points."""
    return AggregatedProcess(bank).cov(x, x2)


def aggregated_posterior(bank: SubModelBank, Xq, X=None, f=None):
    """Gaussian conditioning of the aggregated-process prior on the data.

    ``X`` and ``f`` default to the bank's own design and responses.
    Returns (means, variances, cond_cov); for interpolating experts the
    means and variances agree with the pointwise aggregation.
    """
    means, cov = AggregatedProcess(bank).posterior(Xq, X, f)
    variances = np.maximum(np.diag(cov), 0.0)
    return means, variances, cov


@dataclass(frozen=True)
class DiagnosticsVsFull:
    """Gaps between the aggregated and full models at one point.

    ``var_gap`` is nonnegative up to round-off and bounded above by
    ``bound`` (the best single expert's excess mean squared error); the two
    identity pairs express the same gaps through the modified prior
    covariance and must match to high relative accuracy.
    """

    mean_gap: float
    var_gap: float
    bound: float
    eq_mean_lhs: float
    eq_mean_rhs: float
    eq_var_lhs: float
    eq_var_rhs: float


def diagnostics_vs_full(full: FullModel, bank: SubModelBank, x) -> DiagnosticsVsFull:
    """Compare the aggregation against the exact full model at one point.

    Requires interpolating linear experts (simple Kriging on a partition).
    """
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    L1 = bank.layer1(x2)
    M, kM, KM = L1.M[0], L1.k[0], L1.K[0]
    kxx = bank.kernel.variance
    alpha, _ = solve_weights(KM, kM)
    m_A = float(alpha @ M)
    v_A = max(float(kxx - alpha @ kM), 0.0)

    m_full, v_full = full.predict(x2)
    m_full, v_full = float(m_full[0]), float(v_full[0])

    expert_mse = kxx - 2.0 * kM + np.diag(KM)
    bound = float(expert_mse.min() - v_full)

    # full-design weight vectors of both predictors
    lam_full = solve(full.factor, kernels.cross_matrix(full.kernel, full.X, x2))[:, 0]
    lam_agg = np.zeros(bank.n)
    for g, (idx, fac) in enumerate(zip(bank.groups, bank.factors)):
        a = solve(fac, kernels.cross_matrix(bank.kernel, bank.X[idx], x2))[:, 0]
        lam_agg[idx] = alpha[g] * a

    L = full.factor.lower
    diff = L.T @ (lam_agg - lam_full)
    eq_mean_lhs = float(diff @ diff)

    kXx = kernels.cross_matrix(full.kernel, full.X, x2)[:, 0]
    kAXx = AggregatedProcess(bank).prior_cov(bank.X, x2)[:, 0]
    u = sla.solve_triangular(L, kXx - kAXx, lower=True)
    eq_mean_rhs = float(u @ u)

    w_full = sla.solve_triangular(L, kXx, lower=True)
    w_agg = sla.solve_triangular(L, kAXx, lower=True)
    eq_var_rhs = float(w_full @ w_full - w_agg @ w_agg)

    return DiagnosticsVsFull(
        mean_gap=m_A - m_full,
        var_gap=v_A - v_full,
        bound=bound,
        eq_mean_lhs=eq_mean_lhs,
        eq_mean_rhs=eq_mean_rhs,
        eq_var_lhs=v_A - v_full,
        eq_var_rhs=eq_var_rhs,
    )
