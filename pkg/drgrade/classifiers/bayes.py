"""Gaussian naive Bayes with a per-feature variance floor."""
from typing import Dict, Optional

import numpy as np

from ..errors import EmptyTable
from .models import N_CLASSES, NaiveBayesConfig


class GaussianNaiveBayes:
    def __init__(self, config: Optional[NaiveBayesConfig] = None, n_classes: int = N_CLASSES):
        self.config = config or NaiveBayesConfig()
        self.n_classes = n_classes
        self.log_prior = None
        self.means = None
        self.variances = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GaussianNaiveBayes":
        if len(X) == 0:
            raise EmptyTable("cannot fit naive Bayes on an empty table")
        X = np.asarray(X, dtype=np.float64)
        n_features = X.shape[1]
        counts = np.bincount(y, minlength=self.n_classes)[:self.n_classes].astype(np.float64)
        self.means = np.zeros((self.n_classes, n_features))
        self.variances = np.ones((self.n_classes, n_features))
        for c in range(self.n_classes):
            rows = X[y == c]
            if len(rows):
                self.means[c] = rows.mean(axis=0)
                self.variances[c] = rows.var(axis=0)
        self.variances = np.maximum(self.variances, self.config.var_floor)
        with np.errstate(divide="ignore"):
            # Absent classes get -inf and are never predicted.
            self.log_prior = np.log(counts / counts.sum())
        return self

    def joint_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        diff = X[:, None, :] - self.means[None, :, :]
        log_pdf = -0.5 * (np.log(2.0 * np.pi * self.variances)[None, :, :] + diff ** 2 / self.variances[None, :, :])
        return self.log_prior[None, :] + log_pdf.sum(axis=2)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        jll = jll - jll.max(axis=1, keepdims=True)
        prob = np.exp(jll)
        return prob / prob.sum(axis=1, keepdims=True)

    def predict(self, X: np.ndarray) -> np.ndarray:
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argmax(self.joint_log_likelihood(X), axis=1)

    def state(self) -> Dict[str, list]:
        return {"log_prior": [float(v) if np.isfinite(v) else None for v in self.log_prior],
                "means": self.means.tolist(), "variances": self.variances.tolist()}

    @classmethod
    def from_state(cls, state: Dict[str, list], config: Optional[NaiveBayesConfig] = None) -> "GaussianNaiveBayes":
        model = cls(config)
        model.log_prior = np.array([-np.inf if v is None else v for v in state["log_prior"]])
        model.means = np.array(state["means"], dtype=np.float64)
        model.variances = np.array(state["variances"], dtype=np.float64)
        return model
