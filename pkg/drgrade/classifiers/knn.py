"""k-nearest neighbours, Euclidean distance, majority vote (ties -> lowest label)."""
from typing import Dict, Optional

import numpy as np

from ..errors import EmptyTable
from .models import N_CLASSES, KnnConfig

CHUNK = 512


class KNearestNeighbors:
    def __init__(self, config: Optional[KnnConfig] = None, n_classes: int = N_CLASSES):
        self.config = config or KnnConfig()
        self.n_classes = n_classes
        self.X = None
        self.y = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KNearestNeighbors":
        if len(X) == 0:
            raise EmptyTable("cannot fit KNN on an empty table")
        self.X = np.asarray(X, dtype=np.float64).copy()
        self.y = np.asarray(y, dtype=np.int64).copy()
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        k = min(self.config.k, len(self.X))
        out = np.empty(len(X), dtype=np.int64)
        for start in range(0, len(X), CHUNK):
            block = X[start:start + CHUNK]
            dist2 = ((block[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            nearest = np.argsort(dist2, axis=1, kind="stable")[:, :k]
            for row, idx in enumerate(nearest):
                votes = np.bincount(self.y[idx], minlength=self.n_classes)
                out[start + row] = int(np.argmax(votes))
        return out

    def state(self) -> Dict[str, list]:
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_state(cls, state: Dict[str, list], config: Optional[KnnConfig] = None) -> "KNearestNeighbors":
        model = cls(config)
        model.X = np.array(state["X"], dtype=np.float64)
        model.y = np.array(state["y"], dtype=np.int64)
        return model
