"""Linear classifiers: multinomial logistic regression and a one-vs-rest linear SVM."""
import logging
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import EmptyTable, SolverDiverged
from .models import N_CLASSES, LogisticConfig, SvmConfig

logger = logging.getLogger("DRGrade.Classifiers")


class LogisticRegression:
    """Softmax regression fitted by full-batch gradient descent with an L2 penalty.

    Loss = mean cross-entropy + l2 / 2 * ||W||^2 (the bias is not penalized).
    """

    def __init__(self, config: Optional[LogisticConfig] = None, n_classes: int = N_CLASSES):
        self.config = config or LogisticConfig()
        self.n_classes = n_classes
        self.W = None
        self.b = None

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def logits(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.W + self.b

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        logits = self.logits(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        data = np.mean(log_norm - shifted[np.arange(len(y)), y])
        return float(data + 0.5 * self.config.l2 * np.sum(self.W ** 2))

    def loss_and_gradients(self, X: np.ndarray, y: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        X = np.asarray(X, dtype=np.float64)
        n = len(y)
        prob = self.predict_proba(X)
        loss = float(np.mean(-np.log(np.maximum(prob[np.arange(n), y], 1e-300)))
                     + 0.5 * self.config.l2 * np.sum(self.W ** 2))
        delta = prob
        delta[np.arange(n), y] -= 1.0
        delta /= n
        return loss, {"W": X.T @ delta + self.config.l2 * self.W, "b": delta.sum(axis=0)}

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LogisticRegression":
        if len(X) == 0:
            raise EmptyTable("cannot fit logistic regression on an empty table")
        X = np.asarray(X, dtype=np.float64)
        self.W = np.zeros((X.shape[1], self.n_classes))
        self.b = np.zeros(self.n_classes)
        loss = float("nan")
        for _ in range(self.config.iterations):
            loss, grads = self.loss_and_gradients(X, y)
            if not np.isfinite(loss):
                raise SolverDiverged(f"logistic regression diverged (loss {loss})")
            self.W -= self.config.learning_rate * grads["W"]
            self.b -= self.config.learning_rate * grads["b"]
        logger.info(f"Logistic regression: {self.config.iterations} iterations, final loss {loss:.5f}")
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        logits = self.logits(X)
        exp = np.exp(logits - logits.max(axis=1, keepdims=True))
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, X: np.ndarray) -> np.ndarray:
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argmax(self.logits(X), axis=1)

    def state(self) -> Dict[str, list]:
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_state(cls, state: Dict[str, list], config: Optional[LogisticConfig] = None) -> "LogisticRegression":
        model = cls(config)
        model.W = np.array(state["W"], dtype=np.float64)
        model.b = np.array(state["b"], dtype=np.float64)
        return model


class LinearSVM:
    """One-vs-rest hinge-loss SVM trained by seeded stochastic subgradient descent.

    Per class: minimize lambda/2 ||w||^2 + mean(hinge), lambda = 1 / (C * n),
    step 1 / (lambda * t), with the bias as an extra constant input.
    """

    def __init__(self, config: Optional[SvmConfig] = None, n_classes: int = N_CLASSES):
        self.config = config or SvmConfig()
        self.n_classes = n_classes
        self.W = None  # (n_features + 1, n_classes), last row is the bias

    def _fit_binary(self, Xb: np.ndarray, target: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n, d = Xb.shape
        if np.all(target == target[0]):
            w = np.zeros(d)
            w[-1] = float(target[0])
            return w
        lam = 1.0 / (self.config.C * n)
        w = np.zeros(d)
        averaged = np.zeros(d)
        t = 0
        for _ in range(self.config.linear_epochs):
            for i in rng.permutation(n):
                t += 1
                eta = 1.0 / (lam * t)
                margin = target[i] * (Xb[i] @ w)
                w *= (1.0 - eta * lam)
                if margin < 1.0:
                    w += eta * target[i] * Xb[i]
                averaged += (w - averaged) / t
        if not np.all(np.isfinite(averaged)):
            raise SolverDiverged("linear SVM weights became non-finite")
        return averaged

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LinearSVM":
        if len(X) == 0:
            raise EmptyTable("cannot fit a linear SVM on an empty table")
        Xb = np.hstack([np.asarray(X, dtype=np.float64), np.ones((len(X), 1))])
        rng = np.random.default_rng(self.config.seed)
        columns = [self._fit_binary(Xb, np.where(y == c, 1.0, -1.0), rng) for c in range(self.n_classes)]
        self.W = np.stack(columns, axis=1)
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        Xb = np.hstack([np.asarray(X, dtype=np.float64), np.ones((len(X), 1))])
        return Xb @ self.W

    def predict(self, X: np.ndarray) -> np.ndarray:
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argmax(self.decision_function(X), axis=1)

    def state(self) -> Dict[str, list]:
        return {"W": self.W.tolist()}

    @classmethod
    def from_state(cls, state: Dict[str, list], config: Optional[SvmConfig] = None) -> "LinearSVM":
        model = cls(config)
        model.W = np.array(state["W"], dtype=np.float64)
        return model
