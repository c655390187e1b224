"""Multi-class AdaBoost (SAMME) over depth-1 CART stumps."""
import logging
from typing import Dict, Iterator, List, Optional

import numpy as np

from ..errors import EmptyTable
from .models import N_CLASSES, AdaBoostConfig, TreeConfig
from .tree import DecisionTree

logger = logging.getLogger("DRGrade.Classifiers")

STUMP = TreeConfig(max_depth=1, min_samples_leaf=1)


class AdaBoost:
    def __init__(self, config: Optional[AdaBoostConfig] = None, n_classes: int = N_CLASSES):
        self.config = config or AdaBoostConfig()
        self.n_classes = n_classes
        self.stumps: List[DecisionTree] = []
        self.alphas: List[float] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "AdaBoost":
        if len(X) == 0:
            raise EmptyTable("cannot boost on an empty table")
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        K = self.n_classes
        weights = np.full(len(y), 1.0 / len(y))
        self.stumps, self.alphas = [], []
        for round_no in range(self.config.rounds):
            stump = DecisionTree(STUMP, K).fit(X, y, sample_weight=weights)
            wrong = stump.predict(X) != y
            error = float(np.sum(weights[wrong]) / np.sum(weights))
            if error >= 1.0 - 1.0 / K:
                if not self.stumps:
                    self.stumps.append(stump)
                    self.alphas.append(1.0)
                logger.debug(f"AdaBoost stopped at round {round_no + 1}: weak learner error {error:.4f}")
                break
            if error <= 0.0:
                # A perfect stump decides alone.
                self.stumps.append(stump)
                self.alphas.append(1.0 if not self.alphas else 10.0 * sum(self.alphas))
                break
            alpha = np.log((1.0 - error) / error) + np.log(K - 1.0)
            self.stumps.append(stump)
            self.alphas.append(float(alpha))
            weights = weights * np.exp(alpha * wrong)
            weights /= weights.sum()
        logger.info(f"AdaBoost fitted {len(self.stumps)} stumps")
        return self

    def staged_scores(self, X: np.ndarray) -> Iterator[np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        scores = np.zeros((len(X), self.n_classes))
        for stump, alpha in zip(self.stumps, self.alphas):
            scores[np.arange(len(X)), stump.predict(X)] += alpha
            yield scores.copy()

    def staged_predict(self, X: np.ndarray) -> Iterator[np.ndarray]:
        for scores in self.staged_scores(X):
            yield np.argmax(scores, axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        scores = np.zeros((len(X), self.n_classes))
        for scores in self.staged_scores(X):
            pass
        return np.argmax(scores, axis=1)

    def state(self) -> Dict[str, list]:
        return {"alphas": list(self.alphas), "stumps": [stump.state() for stump in self.stumps]}

    @classmethod
    def from_state(cls, state: Dict[str, list], config: Optional[AdaBoostConfig] = None) -> "AdaBoost":
        model = cls(config)
        model.alphas = [float(a) for a in state["alphas"]]
        model.stumps = [DecisionTree.from_state(s, STUMP) for s in state["stumps"]]
        return model
