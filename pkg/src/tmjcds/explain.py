"""Exact Shapley attributions for tree ensembles.

:func:`tree_shap` implements the polynomial-time path recursion over node
covers: the value function of a feature subset S is the cover-weighted
conditional expectation of the tree output with the features in S fixed to
the explained input.  :func:`brute_force_shap` computes the same quantity by
enumerating all feature subsets and exists purely as a test oracle (it is
exponential by design and refuses d > 15).

Attributions are reported in probability units for the TMJ1 class; base value
plus the attribution sum reproduces the model output (local accuracy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .forest import Forest, TreeNode

BRUTE_FORCE_MAX_FEATURES = 15


@dataclass(frozen=True)
class Attribution:
    per_feature: np.ndarray
    base_value: float
    output: float

    def local_accuracy_gap(self) -> float:
        return abs(self.base_value + float(self.per_feature.sum()) - self.output)


def _leaf_value(node: TreeNode, class_weights: tuple[float, float]) -> float:
    w0, w1 = class_weights
    denom = w0 * node.n0 + w1 * node.n1
    return (w1 * node.n1 / denom) if denom > 0 else 0.5


def expected_value(tree: TreeNode, class_weights: tuple[float, float] = (1.0, 1.0)) -> float:
    """Cover-weighted mean leaf value (the model output over the training mass)."""
    total = 0.0
    for node in tree.walk():
        if node.is_leaf:
            if tree.cover <= 0:
                raise ValueError("zero-cover tree")
            total += node.cover / tree.cover * _leaf_value(node, class_weights)
    return total


def tree_output(tree: TreeNode, x: np.ndarray, class_weights=(1.0, 1.0)) -> float:
    node = tree
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right  # type: ignore[assignment]
    return _leaf_value(node, class_weights)


# --- path recursion ----------------------------------------------------------
#
# The path is four parallel lists: feature index, fraction of paths flowing
# through when the feature is unknown (zero fraction), fraction when it is
# known and matches x (one fraction), and the permutation weight.  Lists are
# 1-based in spirit: element 0 is the root placeholder added by the first
# extend call.


def _extend(d, z, o, w, pz, po, pi):
    l = len(w)
    d.append(pi)
    z.append(pz)
    o.append(po)
    w.append(1.0 if l == 0 else 0.0)
    for i in range(l, 0, -1):
        w[i] += po * w[i - 1] * i / (l + 1)
        w[i - 1] = pz * w[i - 1] * (l + 1 - i) / (l + 1)


def _unwind(d, z, o, w, i):
    l = len(w)
    one = o[i]
    zero = z[i]
    n = w[l - 1]
    if one != 0.0:
        for j in range(l - 1, 0, -1):
            t = w[j - 1]
            w[j - 1] = n * l / (j * one)
            n = t - w[j - 1] * zero * (l - j) / l
    else:
        for j in range(l - 1, 0, -1):
            w[j - 1] = w[j - 1] * l / (zero * (l - j))
    for j in range(i, l - 1):
        d[j] = d[j + 1]
        z[j] = z[j + 1]
        o[j] = o[j + 1]
    del d[-1], z[-1], o[-1], w[-1]


def _unwound_sum(z, o, w, i):
    """Sum of path weights after removing element i, without mutating."""
    l = len(w)
    one = o[i]
    zero = z[i]
    total = 0.0
    if one != 0.0:
        n = w[l - 1]
        for j in range(l - 1, 0, -1):
            tmp = n * l / (j * one)
            total += tmp
            n = w[j - 1] - tmp * zero * (l - j) / l
    else:
        for j in range(l - 1, 0, -1):
            total += w[j - 1] * l / (zero * (l - j))
    return total


def tree_shap(
    tree: TreeNode, x: Sequence[float], n_features: int,
    class_weights: tuple[float, float] = (1.0, 1.0),
) -> Attribution:
    """Exact Shapley values of one tree's output at x (cover-based expectations)."""
    x = np.asarray(x, dtype=float)
    phi = np.zeros(n_features)
    if tree.cover <= 0:
        raise ValueError("zero-cover tree")

    def recurse(node: TreeNode, d, z, o, w, pz, po, pi):
        d, z, o, w = list(d), list(z), list(o), list(w)
        _extend(d, z, o, w, pz, po, pi)
        if node.is_leaf:
            value = _leaf_value(node, class_weights)
            for i in range(1, len(w)):
                total = _unwound_sum(z, o, w, i)
                phi[d[i]] += total * (o[i] - z[i]) * value
            return
        if node.cover <= 0 or node.left.cover <= 0 or node.right.cover <= 0:  # type: ignore[union-attr]
            raise ValueError("zero-cover node")
        hot, cold = (
            (node.left, node.right)
            if x[node.feature] <= node.threshold
            else (node.right, node.left)
        )
        iz, io = 1.0, 1.0
        k = -1
        for i in range(1, len(d)):
            if d[i] == node.feature:
                k = i
                break
        if k >= 0:
            iz, io = z[k], o[k]
            _unwind(d, z, o, w, k)
        recurse(hot, d, z, o, w, iz * hot.cover / node.cover, io, node.feature)  # type: ignore[union-attr]
        recurse(cold, d, z, o, w, iz * cold.cover / node.cover, 0.0, node.feature)  # type: ignore[union-attr]

    recurse(tree, [], [], [], [], 1.0, 1.0, -1)
    base = expected_value(tree, class_weights)
    return Attribution(
        per_feature=phi, base_value=base, output=tree_output(tree, x, class_weights)
    )


# --- enumeration oracle --------------------------------------------------------


def _expvalue(node: TreeNode, x: np.ndarray, mask: int, class_weights) -> float:
    """Cover-weighted conditional expectation fixing the mask's features to x."""
    if node.is_leaf:
        return _leaf_value(node, class_weights)
    if node.cover <= 0:
        raise ValueError("zero-cover node")
    if mask & (1 << node.feature):
        child = node.left if x[node.feature] <= node.threshold else node.right
        return _expvalue(child, x, mask, class_weights)  # type: ignore[arg-type]
    return (
        node.left.cover * _expvalue(node.left, x, mask, class_weights)  # type: ignore[union-attr]
        + node.right.cover * _expvalue(node.right, x, mask, class_weights)  # type: ignore[union-attr]
    ) / node.cover


def brute_force_shap(
    tree: TreeNode, x: Sequence[float], n_features: int,
    class_weights: tuple[float, float] = (1.0, 1.0),
) -> Attribution:
    """Shapley values by subset enumeration; test oracle, O(2^d) by design."""
    if n_features > BRUTE_FORCE_MAX_FEATURES:
        raise ValueError(f"brute force limited to d <= {BRUTE_FORCE_MAX_FEATURES}")
    x = np.asarray(x, dtype=float)
    d = n_features
    values = [
        _expvalue(tree, x, mask, class_weights) for mask in range(1 << d)
    ]
    fact = [math.factorial(i) for i in range(d + 1)]
    phi = np.zeros(d)
    for i in range(d):
        bit = 1 << i
        for mask in range(1 << d):
            if mask & bit:
                continue
            s = bin(mask).count("1")
            weight = fact[s] * fact[d - s - 1] / fact[d]
            phi[i] += weight * (values[mask | bit] - values[mask])
    return Attribution(
        per_feature=phi,
        base_value=values[0],
        output=values[(1 << d) - 1],
    )


def forest_shap(forest: Forest, x: Sequence[float]) -> Attribution:
    """Mean of per-tree attributions (Shapley linearity over model averaging)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != forest.n_features:
        raise ValueError(f"expected {forest.n_features}-vector")
    per_tree = [
        tree_shap(t, x, forest.n_features, forest.class_weights) for t in forest.trees
    ]
    phi = np.mean([a.per_feature for a in per_tree], axis=0)
    base = float(np.mean([a.base_value for a in per_tree]))
    output = float(np.mean([a.output for a in per_tree]))
    return Attribution(per_feature=phi, base_value=base, output=output)


# --- summary export ------------------------------------------------------------


@dataclass(frozen=True)
class SummaryData:
    """Mean-|SHAP| importance ranking plus the per-sample point cloud."""

    feature_names: tuple[str, ...]
    mean_abs_shap: np.ndarray
    ranking: tuple[int, ...]  # feature indices, most important first
    shap_values: np.ndarray  # (N, d)
    feature_values: np.ndarray  # (N, d)
    base_value: float

    def rank_rows(self) -> list[tuple[str, float, int]]:
        return [
            (self.feature_names[j], float(self.mean_abs_shap[j]), rank + 1)
            for rank, j in enumerate(self.ranking)
        ]


def summarize(forest: Forest, X: np.ndarray, feature_names: Optional[Sequence[str]] = None) -> SummaryData:
    """SHAP summary over a sample set; deterministic, ranking ties broken by
    feature order."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty (N, d) sample set")
    names = tuple(feature_names) if feature_names else forest.feature_names
    shap_rows = []
    base = 0.0
    for i in range(X.shape[0]):
        att = forest_shap(forest, X[i])
        shap_rows.append(att.per_feature)
        base = att.base_value
    shap_matrix = np.vstack(shap_rows)
    mean_abs = np.abs(shap_matrix).mean(axis=0)
    ranking = tuple(int(j) for j in np.lexsort((np.arange(len(names)), -mean_abs)))
    return SummaryData(
        feature_names=names,
        mean_abs_shap=mean_abs,
        ranking=ranking,
        shap_values=shap_matrix,
        feature_values=X,
        base_value=base,
    )


def write_summary_csv(summary: SummaryData, rank_path: str, cloud_path: str) -> None:
    """Rank list and long-form point cloud for external plotting."""
    import csv

    with open(rank_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "mean_abs_shap", "rank"])
        for name, value, rank in summary.rank_rows():
            writer.writerow([name, repr(value), rank])
    with open(cloud_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "row_index", "shap_value", "feature_value"])
        for j, name in enumerate(summary.feature_names):
            for i in range(summary.shap_values.shape[0]):
                writer.writerow(
                    [
                        name,
                        i,
                        repr(float(summary.shap_values[i, j])),
                        repr(float(summary.feature_values[i, j])),
                    ]
                )
