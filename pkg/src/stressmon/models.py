"""Binary stress classifiers implemented in-repo: kNN and random forest.

Both are fully deterministic given their spec.  Tie-break rules are part of
the contract so an exhaustive brute-force implementation can reproduce
predictions bit-for-bit:

* kNN: neighbors ordered by (distance, training index); vote ties go to the
  class with the smaller summed distance among the k neighbors, then to
  class 0.
* Trees: the best split minimizes (weighted gini, feature index, threshold);
  leaf ties go to class 0.  Forest vote ties go to class 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError

KINDS = ("knn", "random_forest")


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "random_forest"
    k: int = 5                 # knn
    n_trees: int = 100         # rf
    max_features: int = 3      # rf: features sampled per node (~sqrt(13))
    min_leaf: int = 1          # rf
    bootstrap: bool = True     # rf: off reduces a 1-tree forest to a plain tree
    seed: int | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if min(self.k, self.n_trees, self.max_features, self.min_leaf) < 1:
            raise ValueError("hyperparameters must be positive")
        if self.kind == "random_forest" and self.seed is None:
            raise ValueError("random_forest requires a seed")


def _check_training_set(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or len(X) != len(y):
        raise DatasetError("X must be (m, d) with one label per row")
    if len(np.unique(y)) < 2:
        raise DatasetError("training set has a single class")
    if not set(np.unique(y)) <= {0, 1}:
        raise DatasetError("labels must be binary 0/1")
    return X, y


class KnnModel:
    """k-nearest-neighbors with z-scoring fitted on the training rows."""

    def __init__(self, X, y, k: int):
        X, y = _check_training_set(X, y)
        if k > len(X):
            warnings.warn(f"k={k} exceeds training size {len(X)}; clamping")
            k = len(X)
        self.k = k
        self._mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0.0] = 1.0
        self._std = std
        self._Xz = (X - self._mean) / self._std
        self._y = y

    def predict_one(self, x) -> int:
        xz = (np.asarray(x, dtype=float) - self._mean) / self._std
        dist = np.sqrt(np.sum((self._Xz - xz) ** 2, axis=1))
        nearest = np.argsort(dist, kind="stable")[:self.k]
        votes = self._y[nearest]
        ones = int(votes.sum())
        zeros = len(votes) - ones
        if ones != zeros:
            return int(ones > zeros)
        sum0 = float(dist[nearest[votes == 0]].sum())
        sum1 = float(dist[nearest[votes == 1]].sum())
        if sum1 < sum0:
            return 1
        return 0

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.predict_one(row) for row in X], dtype=int)


class _Tree:
    """Binary CART grown to purity (or min_leaf), gini splits, midpoint thresholds."""

    __slots__ = ("feature", "threshold", "left", "right", "leaf",
                 "_feat", "_thr", "_l", "_r", "_lf")

    def __init__(self, X, y, rng: np.random.Generator, max_features: int, min_leaf: int):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaf: list[int] = []      # -1 for internal nodes
        self._grow(X, y, np.arange(len(y)), rng, max_features, min_leaf)
        self._feat = np.array(self.feature, dtype=int)
        self._thr = np.array(self.threshold)
        self._l = np.array(self.left, dtype=int)
        self._r = np.array(self.right, dtype=int)
        self._lf = np.array(self.leaf, dtype=int)

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf.append(-1)
        return len(self.leaf) - 1

    @staticmethod
    def _majority(y_node: np.ndarray) -> int:
        ones = int(y_node.sum())
        zeros = len(y_node) - ones
        return int(ones > zeros)       # tie -> class 0

    def _grow(self, X, y, idx, rng, max_features, min_leaf) -> int:
        node = self._new_node()
        y_node = y[idx]
        ones = int(y_node.sum())
        if ones == 0 or ones == len(y_node) or len(y_node) < 2 * min_leaf:
            self.leaf[node] = self._majority(y_node)
            return node

        d = X.shape[1]
        feats = rng.choice(d, size=min(max_features, d), replace=False)
        best = None                    # (gini, feature, threshold, split_mask)
        for f in feats:
            col = X[idx, f]
            order = np.argsort(col, kind="stable")
            xs = col[order]
            ys = y_node[order]
            m = len(xs)
            ones_left = np.cumsum(ys)[:-1]
            sizes_left = np.arange(1, m)
            valid = (xs[:-1] < xs[1:]) & (sizes_left >= min_leaf) \
                & (m - sizes_left >= min_leaf)
            if not np.any(valid):
                continue
            nl = sizes_left[valid].astype(float)
            nr = m - nl
            c1l = ones_left[valid].astype(float)
            c0l = nl - c1l
            c1r = ones - c1l
            c0r = nr - c1r
            gini = (nl * (1.0 - (c0l / nl) ** 2 - (c1l / nl) ** 2)
                    + nr * (1.0 - (c0r / nr) ** 2 - (c1r / nr) ** 2)) / m
            j = int(np.argmin(gini))
            pos = sizes_left[valid][j]                    # rows going left
            threshold = (xs[pos - 1] + xs[pos]) / 2.0
            candidate = (float(gini[j]), int(f), float(threshold))
            if best is None or candidate < best[:3]:
                best = candidate + (col <= threshold,)
        if best is None:               # all sampled features constant
            self.leaf[node] = self._majority(y_node)
            return node

        _, feature, threshold, go_left = best
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = self._grow(X, y, idx[go_left], rng, max_features, min_leaf)
        self.right[node] = self._grow(X, y, idx[~go_left], rng, max_features, min_leaf)
        return node

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=int)
        active = self._lf[node] < 0
        while np.any(active):
            rows = np.flatnonzero(active)
            current = node[rows]
            go_left = X[rows, self._feat[current]] <= self._thr[current]
            node[rows] = np.where(go_left, self._l[current], self._r[current])
            active[rows] = self._lf[node[rows]] < 0
        return self._lf[node]


class ForestModel:
    """Bagged trees with per-node feature sampling; majority vote, tie -> 0."""

    def __init__(self, X, y, spec: ClassifierSpec):
        X, y = _check_training_set(X, y)
        seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_trees)
        self._trees = []
        m = len(y)
        for tree_seed in seeds:
            rng = np.random.default_rng(tree_seed)
            if spec.bootstrap:
                sample = rng.integers(0, m, size=m)
            else:
                sample = np.arange(m)
            self._trees.append(_Tree(X[sample], y[sample], rng,
                                     spec.max_features, spec.min_leaf))

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        votes = np.zeros(len(X), dtype=int)
        for tree in self._trees:
            votes += tree.predict(X)
        return (votes * 2 > len(self._trees)).astype(int)

    def predict_one(self, x) -> int:
        return int(self.predict(np.atleast_2d(x))[0])


def train(spec: ClassifierSpec, X, y):
    """Fit the classifier named by ``spec`` on binary-labeled rows."""
    spec.validate()
    if spec.kind == "knn":
        return KnnModel(X, y, spec.k)
    return ForestModel(X, y, spec)
