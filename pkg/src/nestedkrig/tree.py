"""Multi-layer aggregation: tree structures, the layered engine and planning.

Aggregated values can themselves be aggregated.  A tree assigns each node
of layer v a set of children in layer v-1; the engine propagates expert
means and cross-covariances up the layers, so the prediction at the root
never touches any matrix larger than the widest layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, InvalidHeight, InvalidTree
from .gpcore import SubModelBank
from .linalg import solve_weights

PLAN_MODES = ("two_layer_sqrt", "equilibrated", "optimal")
_DELTA = 1.5  # growth ratio of child counts in the minimal-cost tree


@dataclass(frozen=True)
class AggregationTree:
    """Layered aggregation structure.

    ``n_leaves`` is the number of observation points (layer 0) and
    ``n_layer1`` the number of sub-models (layer 1).  ``levels[m]`` holds
    the child sets of layer m+2: a tuple of index tuples into the previous
    layer.  The final layer has exactly one node (the root) and every node
    must have at least one parent; child sets may overlap.
    """

    n_leaves: int
    n_layer1: int
    levels: tuple = field(default=())

    def __post_init__(self):
        levels = tuple(tuple(tuple(int(c) for c in node) for node in level)
                       for level in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise InvalidTree("a tree needs at least one aggregation layer")
        if self.n_layer1 < 1 or self.n_leaves < self.n_layer1:
            raise InvalidTree("invalid leaf / sub-model counts")
        prev = self.n_layer1
        for depth, level in enumerate(levels, start=2):
            if not level:
                raise InvalidTree(f"layer {depth} is empty")
            seen = set()
            for node in level:
                if not node:
                    raise InvalidTree(f"layer {depth} has a childless node")
                if min(node) < 0 or max(node) >= prev:
                    raise InvalidTree(f"layer {depth} child index out of range")
                seen.update(node)
            if seen != set(range(prev)):
                raise InvalidTree(f"layer {depth} does not cover layer {depth - 1}")
            prev = len(level)
        if prev != 1:
            raise InvalidTree("the final layer must contain a single root")

    @classmethod
    def flat(cls, n_leaves: int, p: int) -> "AggregationTree":
        """Two-layer tree whose root aggregates all sub-models at once."""
        return cls(n_leaves=n_leaves, n_layer1=p, levels=((tuple(range(p)),),))

    @property
    def height(self) -> int:
        return 1 + len(self.levels)

    @property
    def layer_sizes(self) -> list:
        """Node counts of layers 1..height."""
        return [self.n_layer1] + [len(level) for level in self.levels]

    def leaf_sizes(self) -> np.ndarray:
        """Balanced layer-1 child counts (observation points per sub-model)."""
        sizes = np.full(self.n_layer1, self.n_leaves // self.n_layer1, dtype=int)
        sizes[: self.n_leaves % self.n_layer1] += 1
        return sizes


def run_layers(M1, k1, K1, tree: AggregationTree):
    """Propagate expert statistics up the tree; the layered engine itself.

    ``M1``/``k1`` have shape (q, p) and ``K1`` shape (q, p, p) for a batch
    of q prediction points.  Returns (root_mean, root_cov), both (q,):
    the root aggregated value and its covariance with the latent process,
    from which the prediction error is k(x,x) - root_cov.

    Layer-1 experts may have Cov(M_i, Y) different from Var(M_i) (noisy or
    non-Kriging covariates): the distinct ``k1`` vector is honored at the
    first aggregation and the diagonal of the propagated covariance is used
    above, where the two provably coincide.
    """
    M = np.asarray(M1, dtype=float)
    k = np.asarray(k1, dtype=float)
    K = np.asarray(K1, dtype=float)
    if M.shape != k.shape or K.shape != M.shape + (M.shape[-1],):
        raise DimensionMismatch("layer-1 statistics have inconsistent shapes")
    if M.shape[-1] != tree.n_layer1:
        raise InvalidTree("tree width does not match the number of experts")

    for depth, level in enumerate(tree.levels):
        q, n_new = M.shape[0], len(level)
        n_prev = M.shape[1]
        kvec = k if depth == 0 else np.einsum("qii->qi", K)
        M_new = np.empty((q, n_new))
        K_new = np.empty((q, n_new, n_new))
        alphas = []
        children = [np.asarray(node, dtype=int) for node in level]
        for i, ci in enumerate(children):
            if ci.shape[0] == n_prev and np.array_equal(ci, np.arange(n_prev)):
                # node over every child: no sub-block extraction needed
                Ksub, ksub, Msub = K, kvec, M
            else:
                Ksub = K[:, ci[:, None], ci[None, :]]
                ksub = kvec[:, ci]
                Msub = M[:, ci]
            a, _ = solve_weights(Ksub, ksub)
            alphas.append(a)
            M_new[:, i] = np.sum(a * Msub, axis=1)
            K_new[:, i, i] = np.sum(a * ksub, axis=1)
        for i, ci in enumerate(children):
            for j in range(i):
                cj = children[j]
                block = K[:, ci[:, None], cj[None, :]]
                e = np.sum(alphas[i] * (block @ alphas[j][:, :, None])[:, :, 0],
                           axis=1)
                K_new[:, i, j] = e
                K_new[:, j, i] = e
        M, K = M_new, K_new
    return M[:, 0], K[:, 0, 0]


def nested_predict_batch(bank: SubModelBank, tree: AggregationTree, Xq):
    """Nested prediction at a batch of points: (means, variances), each (q,)."""
    if tree.n_layer1 != bank.p:
        raise InvalidTree(
            f"tree expects {tree.n_layer1} sub-models, bank holds {bank.p}")
    L1 = bank.layer1(Xq)
    mean, root_cov = run_layers(L1.M, L1.k, L1.K, tree)
    variances = np.maximum(bank.kernel.variance - root_cov, 0.0)
    return mean, variances


def nested_predict(bank: SubModelBank, tree: AggregationTree, x):
    """Nested prediction at a single point: (mean, variance)."""
    means, variances = nested_predict_batch(
        bank, tree, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(means[0]), float(variances[0])


@dataclass(frozen=True)
class TreePlan:
    """Planner output: group count, the tree, and the nominal child counts."""

    p: int
    tree: AggregationTree
    child_counts: tuple


def plan_tree(n: int, mode: str, height: int = 2) -> TreePlan:
    """Plan a regular tree over n observations.

    Modes
    -----
    two_layer_sqrt : sqrt(n) sub-models of sqrt(n) points each (height 2);
        the minimal-storage layout.
    equilibrated : equal child counts n**(1/height) on every layer.
    optimal : child counts growing by the ratio 3/2 between layers,
        c_v = 1.5 * (n / 1.5**height) ** (1.5**(v-1) / (2*(1.5**height - 1))),
        which minimizes the weight-solve cost among regular trees.

    Child counts are the formula values rounded to the nearest integer (at
    least 2); the root absorbs whatever the rounding leaves over, so the
    tree always covers all n points.
    """
    if height < 2:
        raise InvalidHeight("tree height must be at least 2")
    if n < 4:
        raise ValueError("planning requires at least 4 observations")
    if mode not in PLAN_MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {PLAN_MODES}")

    if mode == "two_layer_sqrt":
        height = 2
        c = max(2, round(np.sqrt(n)))
        counts = [c, c]
    elif mode == "equilibrated":
        c = max(2, round(n ** (1.0 / height)))
        counts = [c] * height
    else:
        scaled = n * _DELTA ** (-height)
        counts = [
            max(2, round(_DELTA * scaled ** (_DELTA ** (v - 1)
                                             / (2.0 * (_DELTA ** height - 1.0)))))
            for v in range(1, height + 1)
        ]

    p = int(np.ceil(n / counts[0]))
    sizes = [p]
    for c in counts[1:-1]:
        sizes.append(max(1, int(np.ceil(sizes[-1] / c))))
    levels = []
    for width, c in zip(sizes, counts[1:-1]):
        blocks = [tuple(range(start, min(start + c, width)))
                  for start in range(0, width, c)]
        levels.append(tuple(blocks))
    levels.append((tuple(range(sizes[-1])),))
    tree = AggregationTree(n_leaves=n, n_layer1=p, levels=tuple(levels))
    return TreePlan(p=p, tree=tree, child_counts=tuple(counts))


def complexity_estimate(tree: AggregationTree, alpha_cost: float, beta_cost: float):
    """Predicted cost of one tree prediction and its storage footprint.

    Returns ``(c_alpha, c_beta, storage)``: the weight-solve cost
    ``alpha_cost * sum_v c_v^3 n_v`` summed per node, the cross-covariance
    cost ``beta_cost/2 * sum_v n_v (n_v - 1) c_v^2`` summed per node pair,
    and the peak number of stored reals assuming triangular storage.
    Layer-1 child counts are the balanced group sizes.
    """
    child_counts = [tree.leaf_sizes().tolist()]
    for level in tree.levels:
        child_counts.append([len(node) for node in level])

    c_alpha = 0.0
    c_beta = 0.0
    for counts in child_counts:
        arr = np.asarray(counts, dtype=float)
        c_alpha += alpha_cost * float(np.sum(arr ** 3))
        s1 = float(arr.sum())
        c_beta += 0.5 * beta_cost * (s1 * s1 - float(np.sum(arr ** 2)))
    c_max = max(max(counts) for counts in child_counts)
    sizes = tree.layer_sizes
    n1 = sizes[0]
    n2 = sizes[1] if len(sizes) > 1 else 1
    storage = 0.5 * (c_max * (c_max + 5) + n1 * (n1 + 5) + n2 * (n2 + 3))
    return c_alpha, c_beta, storage
