"""CART decision tree with Gini impurity and optional sample weights.

Nodes are kept in flat lists so the fitted tree serializes directly.
Ties between candidate splits keep the first feature and the lowest
threshold found.
"""
from typing import Dict, List, Optional

import numpy as np

from ..errors import EmptyTable
from .models import N_CLASSES, TreeConfig


def _gini_from_counts(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        shares = np.where(totals[..., None] > 0, counts / totals[..., None], 0.0)
    return 1.0 - np.sum(shares ** 2, axis=-1)


class DecisionTree:
    def __init__(self, config: Optional[TreeConfig] = None, n_classes: int = N_CLASSES):
        self.config = config or TreeConfig()
        self.n_classes = n_classes
        self._reset()

    def _reset(self) -> None:
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[List[float]] = []

    def _new_node(self, counts: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append([float(c) for c in counts])
        return len(self.feature) - 1

    def _class_counts(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.bincount(y, weights=w, minlength=self.n_classes)[:self.n_classes]

    def _best_split(self, X: np.ndarray, y: np.ndarray, w: np.ndarray):
        n, n_features = X.shape
        min_leaf = self.config.min_samples_leaf
        parent = self._class_counts(y, w)
        # Impure nodes always split, even when no candidate lowers the impurity.
        best_score = np.inf
        best = None
        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), y] = w
        for feature in range(n_features):
            order = np.argsort(X[:, feature], kind="stable")
            values = X[order, feature]
            left_counts = np.cumsum(onehot[order], axis=0)[:-1]
            right_counts = parent - left_counts
            positions = np.arange(1, n)
            valid = (values[1:] > values[:-1]) & (positions >= min_leaf) & (n - positions >= min_leaf)
            if not valid.any():
                continue
            score = (_gini_from_counts(left_counts) * left_counts.sum(axis=1)
                     + _gini_from_counts(right_counts) * right_counts.sum(axis=1))
            score = np.where(valid, score, np.inf)
            pos = int(np.argmin(score))
            if score[pos] < best_score:
                best_score = score[pos]
                best = (feature, (values[pos] + values[pos + 1]) / 2.0)
        return best

    def _grow(self, X: np.ndarray, y: np.ndarray, w: np.ndarray, depth: int) -> int:
        node = self._new_node(self._class_counts(y, w))
        if depth >= self.config.max_depth or len(np.unique(y)) < 2 or len(y) < 2 * self.config.min_samples_leaf:
            return node
        split = self._best_split(X, y, w)
        if split is None:
            return node
        feature, threshold = split
        goes_left = X[:, feature] <= threshold
        self.feature[node] = feature
        self.threshold[node] = float(threshold)
        left = self._grow(X[goes_left], y[goes_left], w[goes_left], depth + 1)
        right = self._grow(X[~goes_left], y[~goes_left], w[~goes_left], depth + 1)
        self.left[node] = left
        self.right[node] = right
        return node

    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: Optional[np.ndarray] = None) -> "DecisionTree":
        if len(X) == 0:
            raise EmptyTable("cannot grow a tree on an empty table")
        weights = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        self._reset()
        self._grow(np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64), weights, 0)
        return self

    def _leaf_index(self, X: np.ndarray) -> np.ndarray:
        nodes = np.zeros(len(X), dtype=np.int64)
        feature = np.array(self.feature)
        threshold = np.array(self.threshold)
        left = np.array(self.left)
        right = np.array(self.right)
        active = feature[nodes] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            current = nodes[idx]
            go_left = X[idx, feature[current]] <= threshold[current]
            nodes[idx] = np.where(go_left, left[current], right[current])
            active = feature[nodes] >= 0
        return nodes

    def predict(self, X: np.ndarray) -> np.ndarray:
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        values = np.array(self.value)
        return np.argmax(values[self._leaf_index(np.asarray(X, dtype=np.float64))], axis=1)

    def state(self) -> Dict[str, list]:
        return {"feature": list(self.feature), "threshold": list(self.threshold),
                "left": list(self.left), "right": list(self.right), "value": list(self.value)}

    @classmethod
    def from_state(cls, state: Dict[str, list], config: Optional[TreeConfig] = None) -> "DecisionTree":
        tree = cls(config)
        tree.feature = [int(v) for v in state["feature"]]
        tree.threshold = [float(v) for v in state["threshold"]]
        tree.left = [int(v) for v in state["left"]]
        tree.right = [int(v) for v in state["right"]]
        tree.value = [[float(c) for c in row] for row in state["value"]]
        return tree
