"""From-scratch Random Forest binary classifier.

Bagged CART trees, Gini-impurity splits over a per-node feature subsample,
midpoint thresholds, probability prediction by averaging per-tree leaf class
frequencies.  Training is deterministic for a given seed independent of the
number of worker threads: each tree draws from its own RNG substream seeded
by (seed, tree_index).

Node ``cover`` counts (training samples reaching the node) are retained on
every node; the explainer uses them as conditional-expectation weights.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

FOREST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 500
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    features_per_split: Union[str, int] = "sqrt"
    bootstrap: bool = True
    seed: int = 0
    class_weight: str = "uniform"

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if isinstance(self.features_per_split, str):
            if self.features_per_split not in ("sqrt", "log2", "all"):
                raise ValueError("features_per_split must be sqrt/log2/all or an int")
        elif self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")
        if self.class_weight not in ("uniform", "balanced"):
            raise ValueError("class_weight must be uniform or balanced")

    def n_candidate_features(self, d: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(math.sqrt(d)))
        if self.features_per_split == "log2":
            return max(1, int(math.log2(d))) if d > 1 else 1
        if self.features_per_split == "all":
            return d
        return min(d, int(self.features_per_split))

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "min_samples_split": self.min_samples_split,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
            "class_weight": self.class_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestHyperparams":
        return cls(**d)


@dataclass
class TreeNode:
    """Internal node (left/right set) or leaf (class counts set)."""

    cover: int
    n0: int
    n1: int
    feature: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def walk(self):
        yield self
        if not self.is_leaf:
            yield from self.left.walk()  # type: ignore[union-attr]
            yield from self.right.walk()  # type: ignore[union-attr]


def _gini(w0: float, w1: float) -> float:
    tot = w0 + w1
    if tot <= 0:
        return 0.0
    return 1.0 - (w0 * w0 + w1 * w1) / (tot * tot)


def _best_split(
    X: np.ndarray, y: np.ndarray, idx: np.ndarray, feats: np.ndarray,
    weights: np.ndarray, min_leaf: int,
):
    """Best (gini-decrease) midpoint split over the candidate features.

    Ties break to the lowest feature index, then the lowest threshold, which
    the ascending scan realises by keeping the first strict improvement.
    """
    yy = y[idx]
    w = weights[yy]
    w1_tot = float(w[yy == 1].sum())
    w_tot = float(w.sum())
    parent = _gini(w_tot - w1_tot, w1_tot)
    n = len(idx)
    best = None  # (decrease, feature, threshold)
    for j in feats:
        xs = X[idx, j]
        order = np.argsort(xs, kind="stable")
        sx = xs[order]
        sy = yy[order]
        sw = weights[sy]
        cw1 = np.cumsum(sw * sy)
        cw = np.cumsum(sw)
        distinct = np.nonzero(sx[:-1] < sx[1:])[0]
        for i in distinct:
            nl = i + 1
            if nl < min_leaf or n - nl < min_leaf:
                continue
            thr = (float(sx[i]) + float(sx[i + 1])) / 2.0
            if not (float(sx[i]) <= thr < float(sx[i + 1])):
                continue  # adjacent floats: midpoint collapsed onto the right value
            wl = float(cw[i])
            wl1 = float(cw1[i])
            wr = w_tot - wl
            wr1 = w1_tot - wl1
            dec = parent - (wl * _gini(wl - wl1, wl1) + wr * _gini(wr - wr1, wr1)) / w_tot
            if best is None or dec > best[0]:
                best = (dec, int(j), thr)
    return best


def _build_tree(
    X: np.ndarray, y: np.ndarray, idx: np.ndarray, depth: int,
    rng: np.random.Generator, hp: ForestHyperparams, weights: np.ndarray, d: int,
) -> TreeNode:
    n1 = int(y[idx].sum())
    n0 = len(idx) - n1
    node = TreeNode(cover=len(idx), n0=n0, n1=n1)
    if (
        n0 == 0
        or n1 == 0
        or len(idx) < hp.min_samples_split
        or (hp.max_depth is not None and depth >= hp.max_depth)
    ):
        return node
    m = hp.n_candidate_features(d)
    feats = np.sort(rng.choice(d, size=m, replace=False))
    best = _best_split(X, y, idx, feats, weights, hp.min_samples_leaf)
    if best is None or best[0] <= 0.0:
        return node
    _, j, thr = best
    mask = X[idx, j] <= thr
    left = _build_tree(X, y, idx[mask], depth + 1, rng, hp, weights, d)
    right = _build_tree(X, y, idx[~mask], depth + 1, rng, hp, weights, d)
    node.feature = j
    node.threshold = thr
    node.left = left
    node.right = right
    return node


@dataclass
class _FlatTree:
    """Array form of one tree for fast batched traversal and serialization."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cover: np.ndarray
    n0: np.ndarray
    n1: np.ndarray


def _flatten(root: TreeNode) -> _FlatTree:
    nodes: list[TreeNode] = []

    def visit(node: TreeNode) -> int:
        i = len(nodes)
        nodes.append(node)
        if not node.is_leaf:
            li = visit(node.left)  # type: ignore[arg-type]
            ri = visit(node.right)  # type: ignore[arg-type]
            lefts[i] = li
            rights[i] = ri
        return i

    # two passes: first count, then fill (lefts/rights need final size)
    lefts: dict[int, int] = {}
    rights: dict[int, int] = {}
    visit(root)
    n = len(nodes)
    flat = _FlatTree(
        feature=np.array([nd.feature for nd in nodes], dtype=np.int32),
        threshold=np.array([nd.threshold for nd in nodes], dtype=float),
        left=np.full(n, -1, dtype=np.int32),
        right=np.full(n, -1, dtype=np.int32),
        cover=np.array([nd.cover for nd in nodes], dtype=np.int64),
        n0=np.array([nd.n0 for nd in nodes], dtype=np.int64),
        n1=np.array([nd.n1 for nd in nodes], dtype=np.int64),
    )
    for i, li in lefts.items():
        flat.left[i] = li
    for i, ri in rights.items():
        flat.right[i] = ri
    return flat


def _rebuild(flat: _FlatTree, i: int = 0) -> TreeNode:
    node = TreeNode(
        cover=int(flat.cover[i]),
        n0=int(flat.n0[i]),
        n1=int(flat.n1[i]),
    )
    if flat.left[i] >= 0:
        node.feature = int(flat.feature[i])
        node.threshold = float(flat.threshold[i])
        node.left = _rebuild(flat, int(flat.left[i]))
        node.right = _rebuild(flat, int(flat.right[i]))
    return node


@dataclass
class Forest:
    trees: list[TreeNode]
    hyperparams: ForestHyperparams
    feature_names: tuple[str, ...]
    class_weights: tuple[float, float] = (1.0, 1.0)
    oob_estimate: Optional[float] = None
    _flat: list[_FlatTree] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if not self._flat:
            self._flat = [_flatten(t) for t in self.trees]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _leaf_p1(self, n0: np.ndarray, n1: np.ndarray) -> np.ndarray:
        w0, w1 = self.class_weights
        denom = w0 * n0 + w1 * n1
        return np.where(denom > 0, w1 * n1 / np.where(denom > 0, denom, 1.0), 0.5)

    def _apply_tree(self, flat: _FlatTree, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        ptr = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            internal = flat.left[ptr] >= 0
            if not internal.any():
                return ptr
            rows = np.nonzero(internal)[0]
            cur = ptr[rows]
            go_left = X[rows, flat.feature[cur]] <= flat.threshold[cur]
            ptr[rows] = np.where(go_left, flat.left[cur], flat.right[cur])

    def per_tree_p1(self, X: np.ndarray) -> np.ndarray:
        """(n_trees, N) matrix of per-tree TMJ1 leaf frequencies."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected (N, {self.n_features}) matrix, got {X.shape}")
        if not np.isfinite(X).all():
            raise ValueError("non-finite feature value")
        out = np.empty((len(self._flat), X.shape[0]))
        for t, flat in enumerate(self._flat):
            leaves = self._apply_tree(flat, X)
            out[t] = self._leaf_p1(flat.n0[leaves], flat.n1[leaves])
        return out

    def predict_proba_matrix(self, X: np.ndarray) -> np.ndarray:
        p1 = self.per_tree_p1(X).mean(axis=0)
        return np.column_stack([1.0 - p1, p1])

    def predict_proba(self, x: Sequence[float]) -> tuple[float, float]:
        """(p0, p1) for one sample; p0 is computed as 1 - p1."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.n_features:
            raise ValueError(f"expected {self.n_features}-vector, got shape {x.shape}")
        p1 = float(self.per_tree_p1(x[None, :]).mean(axis=0)[0])
        return (1.0 - p1, p1)

    def predict(self, x: Sequence[float]) -> int:
        """Point label; ties break to TMJ0."""
        p0, p1 = self.predict_proba(x)
        return 1 if p1 > p0 else 0

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        proba = self.predict_proba_matrix(X)
        return (proba[:, 1] > proba[:, 0]).astype(np.int8)

    # --- serialization ----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format_version": FOREST_FORMAT_VERSION,
            "hyperparams": self.hyperparams.to_dict(),
            "feature_names": list(self.feature_names),
            "class_weights": list(self.class_weights),
            "oob_estimate": self.oob_estimate,
            "trees": [
                {
                    "feature": flat.feature.tolist(),
                    "threshold": flat.threshold.tolist(),
                    "left": flat.left.tolist(),
                    "right": flat.right.tolist(),
                    "cover": flat.cover.tolist(),
                    "n0": flat.n0.tolist(),
                    "n1": flat.n1.tolist(),
                }
                for flat in self._flat
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        doc = json.loads(text)
        if doc["format_version"] != FOREST_FORMAT_VERSION:
            raise ValueError(f"unsupported forest format {doc['format_version']}")
        flats = [
            _FlatTree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=np.asarray(t["threshold"], dtype=float),
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                cover=np.asarray(t["cover"], dtype=np.int64),
                n0=np.asarray(t["n0"], dtype=np.int64),
                n1=np.asarray(t["n1"], dtype=np.int64),
            )
            for t in doc["trees"]
        ]
        return cls(
            trees=[_rebuild(f) for f in flats],
            hyperparams=ForestHyperparams.from_dict(doc["hyperparams"]),
            feature_names=tuple(doc["feature_names"]),
            class_weights=tuple(doc["class_weights"]),
            oob_estimate=doc["oob_estimate"],
            _flat=flats,
        )


def fit(
    X: np.ndarray,
    y: np.ndarray,
    hp: ForestHyperparams,
    feature_names: Optional[Sequence[str]] = None,
    threads: int = 1,
) -> Forest:
    """Train a forest; deterministic given hp.seed regardless of thread count."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int8)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty (N, d) matrix")
    if X.shape[0] != len(y):
        raise ValueError("X and y must align")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature value in X")
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 training samples")
    if len(np.unique(y)) < 2:
        warnings.warn("single-class training labels: forest degenerates to a constant")
    if hp.class_weight == "balanced":
        counts = np.bincount(y, minlength=2).astype(float)
        weights = np.array(
            [n / (2.0 * counts[0]) if counts[0] else 0.0,
             n / (2.0 * counts[1]) if counts[1] else 0.0]
        )
    else:
        weights = np.ones(2)

    def train_one(t: int) -> tuple[TreeNode, Optional[np.ndarray]]:
        rng = np.random.default_rng([hp.seed, t])
        if hp.bootstrap:
            idx = np.sort(rng.integers(0, n, size=n))
            oob = np.setdiff1d(np.arange(n), np.unique(idx), assume_unique=True)
        else:
            idx = np.arange(n)
            oob = None
        root = _build_tree(X, y, idx, 0, rng, hp, weights, d)
        return root, oob

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(train_one, range(hp.n_trees)))
    else:
        results = [train_one(t) for t in range(hp.n_trees)]

    trees = [r[0] for r in results]
    forest = Forest(
        trees=trees,
        hyperparams=hp,
        feature_names=tuple(feature_names) if feature_names else tuple(f"f{i}" for i in range(d)),
        class_weights=(float(weights[0]), float(weights[1])),
    )

    if hp.bootstrap:
        votes = np.zeros(n)
        counts = np.zeros(n)
        for flat, (_, oob) in zip(forest._flat, results):
            if oob is None or len(oob) == 0:
                continue
            leaves = forest._apply_tree(flat, X[oob])
            votes[oob] += forest._leaf_p1(flat.n0[leaves], flat.n1[leaves])
            counts[oob] += 1
        seen = counts > 0
        if seen.any():
            mean_p1 = votes[seen] / counts[seen]
            pred = (mean_p1 > 0.5).astype(np.int8)
            forest.oob_estimate = float((pred == y[seen]).mean())
    return forest
