"""Covariance-parameter estimation from leave-one-out cross-validation.

Two-step procedure: length-scales minimize the leave-one-out mean square
error of the nested predictor, then the process variance is set so the
normalized leave-one-out errors have unit variance.  The minimization uses
a simultaneous-perturbation stochastic gradient: each iteration estimates
the directional derivative of the criterion on a random subset of points by
a central finite difference along a Rademacher direction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .exceptions import DimensionMismatch
from .gpcore import fill_expert_cross_cov
from .kernels import KernelSpec
from .linalg import factor_spd, solve
from .tree import AggregationTree, run_layers

# floor for unit-scale leave-one-out variances; the deleted point is absent
# from every group so the true value is positive
LOO_VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class LooRecord:
    """Leave-one-out prediction at one deleted design point.

    ``v_loo`` is expressed at unit process variance (the predictive
    variance divided by the kernel variance), which is the scale the
    variance estimator needs.
    """

    index: int
    m_loo: float
    v_loo: float


def loo_predict(dataset, partition, tree: AggregationTree, kernel: KernelSpec,
                indices=None) -> list:
    """Exact leave-one-out nested predictions at the requested indices.

    For each index only the sub-model owning the deleted point is rebuilt
    (one group refactorization); every other expert, the group layout and
    the tree are left untouched.  Indices whose group would become empty
    are skipped with a warning.
    """
    X, y = dataset.X, dataset.y
    n = X.shape[0]
    if partition.n != n:
        raise DimensionMismatch("partition length does not match the dataset")
    if indices is None:
        indices = np.arange(n)
    indices = np.asarray(indices, dtype=int)

    groups = partition.groups()
    group_of = np.empty(n, dtype=int)
    pos_in_group = np.empty(n, dtype=int)
    for g, idx in enumerate(groups):
        group_of[idx] = g
        pos_in_group[idx] = np.arange(len(idx))

    keep = np.array([len(groups[group_of[i]]) > 1 for i in indices])
    if not np.all(keep):
        skipped = indices[~keep].tolist()
        warnings.warn(
            f"skipping leave-one-out at indices {skipped}: deleting them "
            "would empty their group")
    indices = indices[keep]
    if indices.size == 0:
        return []

    m_loo, v_unit = _loo_batch(kernel, X, y, groups, group_of, pos_in_group,
                               tree, indices)
    return [LooRecord(index=int(i), m_loo=float(m), v_loo=float(v))
            for i, m, v in zip(indices, m_loo, v_unit)]


def _loo_batch(kernel, X, y, groups, group_of, pos_in_group, tree, indices):
    """Batched leave-one-out engine; cross-covariances shared across the batch."""
    p = len(groups)
    q = indices.shape[0]
    Xb = X[indices]
    order = np.concatenate(groups)
    Xcat = np.ascontiguousarray(X[order])
    sizes = np.array([len(g) for g in groups])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    factors = []
    for g in range(p):
        lo, hi = starts[g], starts[g] + sizes[g]
        factors.append(factor_spd(
            kernels.cross_matrix(kernel, Xcat[lo:hi], Xcat[lo:hi])))

    # full-size weight columns; the deleted point's own group gets the
    # downdated weights embedded with a zero in the deleted slot, which
    # makes every later product skip that row without slicing
    C_all = kernels.cross_matrix(kernel, Xcat, Xb)
    A = []
    for g in range(p):
        lo, hi = starts[g], starts[g] + sizes[g]
        A.append(solve(factors[g], C_all[lo:hi]))
    for t, i in enumerate(indices):
        g = group_of[i]
        idx = groups[g]
        sub = idx[idx != i]
        Ksub = kernels.cross_matrix(kernel, X[sub], X[sub])
        csub = kernels.cross_matrix(kernel, X[sub], X[i:i + 1])
        a = solve(factor_spd(Ksub), csub)[:, 0]
        col = np.zeros(len(idx))
        col[np.arange(len(idx)) != pos_in_group[i]] = a
        A[g][:, t] = col

    M = np.empty((q, p))
    kM = np.empty((q, p))
    K = np.empty((q, p, p))
    for g, idx in enumerate(groups):
        lo, hi = starts[g], starts[g] + sizes[g]
        M[:, g] = A[g].T @ y[idx]
        kM[:, g] = np.sum(A[g] * C_all[lo:hi], axis=0)
        K[:, g, g] = kM[:, g]
    fill_expert_cross_cov(kernel, Xcat, starts, A, K)

    mean, root_cov = run_layers(M, kM, K, tree)
    v_unit = np.maximum((kernel.variance - root_cov) / kernel.variance,
                        LOO_VARIANCE_FLOOR)
    return mean, v_unit


def loo_criterion(records, y) -> float:
    """Mean squared leave-one-out prediction error."""
    if not records:
        raise ValueError("no leave-one-out records")
    y = np.asarray(y, dtype=float)
    errs = np.array([y[r.index] - r.m_loo for r in records])
    return float(np.mean(errs ** 2))


def estimate_sigma2(records, y) -> float:
    """Process variance making the normalized leave-one-out errors unit-variance."""
    if not records:
        raise ValueError("no leave-one-out records")
    y = np.asarray(y, dtype=float)
    ratios = np.array([(y[r.index] - r.m_loo) ** 2 / r.v_loo for r in records])
    return float(np.mean(ratios))


@dataclass
class SgdConfig:
    """Settings of the stochastic gradient descent.

    Step sizes follow a_i = a / (A + i + 1)**alpha and the perturbation
    sizes delta_i = c / (i + 1)**gamma; gamma defaults to 0.101 and alpha
    to 0.602 (0.2 is the gentler alternative for a first phase).  ``A``
    defaults to a tenth of the iteration count.  Good values of a and c
    depend on the problem; the defaults suit unit-scale inputs.
    """

    theta0: tuple = (0.1,)
    a: float = 0.1
    A: float | None = None
    alpha: float = 0.602
    c: float = 0.1
    gamma: float = 0.101
    q: int = 100
    n_iter: int = 500
    seed: int = 0

    def __post_init__(self):
        self.theta0 = tuple(float(t) for t in np.atleast_1d(self.theta0))
        if any(t <= 0 for t in self.theta0):
            raise ValueError("initial lengthscales must be positive")
        for name in ("a", "c", "gamma", "alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.A is None:
            self.A = self.n_iter / 10.0
        if self.q < 1 or self.n_iter < 0:
            raise ValueError("q must be >= 1 and n_iter >= 0")


@dataclass
class SgdResult:
    theta: np.ndarray
    history: list = field(default_factory=list)


def sgd_fit(dataset, partition, tree: AggregationTree, cfg: SgdConfig,
            family: str = "matern52", log_fn=None) -> SgdResult:
    """Minimize the leave-one-out criterion over log length-scales.

    Per iteration: draw a uniform subset of ``cfg.q`` indices without
    replacement, a Rademacher direction h, and move the log length-scales
    against the central finite difference of the subset criterion along h.
    The subset, direction and hence the whole trajectory are reproducible
    from ``cfg.seed``.  A non-finite criterion evaluation rejects the step
    and halves the step-size scale once.

    ``log_fn`` receives one line per iteration.
    """
    y = dataset.y
    q = min(cfg.q, dataset.n)
    log_theta = np.log(np.asarray(cfg.theta0, dtype=float))
    if log_theta.shape[0] != dataset.d:
        raise DimensionMismatch("theta0 length must match the input dimension")

    def criterion(log_t, subset):
        spec = KernelSpec(family, 1.0, tuple(np.exp(log_t)))
        records = loo_predict(dataset, partition, tree, spec, subset)
        return loo_criterion(records, y) if records else np.nan

    a_scale = cfg.a
    history = []
    for it in range(1, cfg.n_iter + 1):
        rng = np.random.default_rng([cfg.seed, it])
        subset = rng.choice(dataset.n, size=q, replace=False)
        h = rng.integers(0, 2, size=log_theta.shape[0]) * 2.0 - 1.0
        delta = cfg.c / (it + 1) ** cfg.gamma
        a_i = a_scale / (cfg.A + it + 1) ** cfg.alpha
        c_plus = criterion(log_theta + delta * h, subset)
        c_minus = criterion(log_theta - delta * h, subset)
        if not (np.isfinite(c_plus) and np.isfinite(c_minus)):
            a_scale *= 0.5
            estimate = np.nan
        else:
            grad = (c_plus - c_minus) / (2.0 * delta)
            log_theta = log_theta - a_i * grad * h
            estimate = 0.5 * (c_plus + c_minus)
        history.append((it, estimate, tuple(np.exp(log_theta))))
        if log_fn is not None:
            theta_txt = " ".join(f"{t:.6g}" for t in np.exp(log_theta))
            log_fn(f"iter={it} criterion={estimate:.6g} theta={theta_txt}")
    return SgdResult(theta=np.exp(log_theta), history=history)


def sgd_fit_two_phase(dataset, partition, tree: AggregationTree, cfg: SgdConfig,
                      family: str = "matern52", log_fn=None) -> SgdResult:
    """Gentle first descent (alpha=0.2) whose end point seeds a second (alpha=0.602)."""
    first = SgdConfig(theta0=cfg.theta0, a=cfg.a, A=cfg.A, alpha=0.2, c=cfg.c,
                      gamma=cfg.gamma, q=cfg.q, n_iter=cfg.n_iter // 2,
                      seed=cfg.seed)
    res1 = sgd_fit(dataset, partition, tree, first, family, log_fn)
    second = SgdConfig(theta0=tuple(res1.theta), a=cfg.a, A=cfg.A, alpha=0.602,
                       c=cfg.c, gamma=cfg.gamma, q=cfg.q,
                       n_iter=cfg.n_iter - first.n_iter, seed=cfg.seed + 1)
    res2 = sgd_fit(dataset, partition, tree, second, family, log_fn)
    return SgdResult(theta=res2.theta, history=res1.history + res2.history)


def grid_profile_loglik(dataset, partition, family: str, theta_grid) -> KernelSpec:
    """Starting-point convenience: maximize the summed per-group log likelihood.

    Plain grid search over candidate length-scale vectors with the process
    variance profiled out analytically.  Not an estimator of record, just a
    cheap initializer.
    """
    groups = partition.groups()
    n = dataset.n
    best = None
    for theta in theta_grid:
        theta = tuple(np.atleast_1d(np.asarray(theta, dtype=float)))
        if len(theta) == 1 and dataset.d > 1:
            theta = theta * dataset.d
        spec = KernelSpec(family, 1.0, theta)
        quad = 0.0
        logdet = 0.0
        try:
            for idx in groups:
                R = kernels.cross_matrix(spec, dataset.X[idx], dataset.X[idx])
                fac = factor_spd(R)
                z = solve(fac, dataset.y[idx])
                quad += float(dataset.y[idx] @ z)
                logdet += 2.0 * float(np.sum(np.log(np.diag(fac.lower))))
        except Exception:
            continue
        if quad <= 0.0:
            continue
        sigma2 = quad / n
        loglik = -0.5 * (n * np.log(sigma2) + logdet + n * (1.0 + np.log(2.0 * np.pi)))
        if best is None or loglik > best[0]:
            best = (loglik, KernelSpec(family, sigma2, theta))
    if best is None:
        raise ValueError("no candidate length-scale produced a valid likelihood")
    return best[1]
