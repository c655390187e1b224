"""Kernel SVMs solved with SMO-style pairwise dual updates, one-vs-rest for 3 classes.

The binary solver follows the simplified SMO scheme: sweep the samples, pick
any alpha violating the KKT conditions by more than ``tol``, pair it with a
seeded random partner, and stop after ``max_passes`` consecutive sweeps with
no change (or ``max_iter`` sweeps in total).
"""
import logging
from typing import Dict, Optional

import numpy as np

from ..errors import EmptyTable, SolverDiverged
from .models import N_CLASSES, SvmConfig

logger = logging.getLogger("DRGrade.Classifiers")

ALPHA_EPS = 1e-8


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, degree: int = 3,
                  coef0: float = 1.0, gamma: float = 1.0) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "poly":
        return (A @ B.T + coef0) ** degree
    if kernel == "rbf":
        sq = (A ** 2).sum(axis=1)[:, None] + (B ** 2).sum(axis=1)[None, :] - 2.0 * A @ B.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


class BinarySMO:
    """Soft-margin binary SVM dual; labels are +1 / -1."""

    def __init__(self, C: float = 1.0, tol: float = 1e-3, max_passes: int = 10,
                 max_iter: int = 100, seed: int = 0):
        self.C = C
        self.tol = tol
        self.max_passes = max_passes
        self.max_iter = max_iter
        self.seed = seed
        self.alphas = None
        self.b = 0.0

    def fit(self, K: np.ndarray, y: np.ndarray) -> "BinarySMO":
        n = len(y)
        self.alphas = np.zeros(n)
        self.b = 0.0
        if np.all(y == y[0]):
            self.b = float(y[0])
            return self
        rng = np.random.default_rng(self.seed)
        C, tol = self.C, self.tol
        f = np.zeros(n)  # decision values without the bias
        passes = sweeps = 0
        while passes < self.max_passes and sweeps < self.max_iter:
            changed = 0
            for i in range(n):
                E_i = f[i] + self.b - y[i]
                a_i = self.alphas[i]
                if not ((y[i] * E_i < -tol and a_i < C) or (y[i] * E_i > tol and a_i > 0)):
                    continue
                j = int(rng.integers(n - 1))
                j += j >= i
                E_j = f[j] + self.b - y[j]
                a_j = self.alphas[j]
                if y[i] == y[j]:
                    L, H = max(0.0, a_i + a_j - C), min(C, a_i + a_j)
                else:
                    L, H = max(0.0, a_j - a_i), min(C, C + a_j - a_i)
                if H - L < 1e-12:
                    continue
                eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
                if eta >= 0:
                    continue
                new_j = min(H, max(L, a_j - y[j] * (E_i - E_j) / eta))
                if abs(new_j - a_j) < 1e-10:
                    continue
                new_i = a_i + y[i] * y[j] * (a_j - new_j)
                d_i, d_j = new_i - a_i, new_j - a_j
                b1 = self.b - E_i - y[i] * d_i * K[i, i] - y[j] * d_j * K[i, j]
                b2 = self.b - E_j - y[i] * d_i * K[i, j] - y[j] * d_j * K[j, j]
                if 0 < new_i < C:
                    new_b = b1
                elif 0 < new_j < C:
                    new_b = b2
                else:
                    new_b = (b1 + b2) / 2.0
                self.alphas[i], self.alphas[j] = new_i, new_j
                f += y[i] * d_i * K[i] + y[j] * d_j * K[j]
                self.b = new_b
                changed += 1
            sweeps += 1
            passes = passes + 1 if changed == 0 else 0
        if not (np.all(np.isfinite(self.alphas)) and np.isfinite(self.b)):
            raise SolverDiverged("SMO produced non-finite dual variables")
        logger.debug(f"SMO finished after {sweeps} sweeps, {int(np.sum(self.alphas > ALPHA_EPS))} support vectors")
        return self

    def decision(self, K_test: np.ndarray, y: np.ndarray) -> np.ndarray:
        """K_test has shape (n_test, n_train)."""
        return K_test @ (self.alphas * y) + self.b

    def dual_objective(self, K: np.ndarray, y: np.ndarray) -> float:
        ay = self.alphas * y
        return float(self.alphas.sum() - 0.5 * ay @ K @ ay)


class KernelSVM:
    """One-vs-rest kernel SVM; the prediction is the class with the largest decision value."""

    def __init__(self, kernel: str, config: Optional[SvmConfig] = None, n_classes: int = N_CLASSES):
        self.kernel = kernel
        self.config = config or SvmConfig()
        self.n_classes = n_classes
        self.gamma = None
        self.support = []  # per class: (support vectors, coef = alpha * y, bias)

    def _kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return kernel_matrix(A, B, self.kernel, self.config.degree, self.config.coef0, self.gamma)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KernelSVM":
        if len(X) == 0:
            raise EmptyTable("cannot fit a kernel SVM on an empty table")
        X = np.asarray(X, dtype=np.float64)
        self.gamma = self.config.gamma or 1.0 / X.shape[1]
        K = self._kernel(X, X)
        self.support = []
        for c in range(self.n_classes):
            target = np.where(y == c, 1.0, -1.0)
            solver = BinarySMO(self.config.C, self.config.tol, self.config.max_passes,
                               self.config.max_iter, self.config.seed + c).fit(K, target)
            keep = solver.alphas > ALPHA_EPS
            self.support.append((X[keep], (solver.alphas * target)[keep], solver.b))
        logger.info(f"{self.kernel} SVM fitted; support vectors per class: "
                    f"{[len(sv) for sv, _, _ in self.support]}")
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        columns = []
        for sv, coef, bias in self.support:
            if len(sv):
                columns.append(self._kernel(X, sv) @ coef + bias)
            else:
                columns.append(np.full(len(X), bias))
        return np.stack(columns, axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argmax(self.decision_function(X), axis=1)

    def state(self) -> Dict[str, object]:
        return {"kernel": self.kernel, "gamma": self.gamma,
                "classes": [{"support_vectors": sv.tolist(), "coef": coef.tolist(), "bias": float(bias)}
                            for sv, coef, bias in self.support]}

    @classmethod
    def from_state(cls, state: Dict[str, object], config: Optional[SvmConfig] = None) -> "KernelSVM":
        model = cls(state["kernel"], config)
        model.gamma = float(state["gamma"])
        n_features = None
        support = []
        for entry in state["classes"]:
            sv = np.array(entry["support_vectors"], dtype=np.float64)
            if sv.size:
                n_features = sv.shape[1]
            support.append((sv, np.array(entry["coef"], dtype=np.float64), float(entry["bias"])))
        model.support = [(sv if sv.size else np.zeros((0, n_features or 0)), coef, bias)
                         for sv, coef, bias in support]
        return model
