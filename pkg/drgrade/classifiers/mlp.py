"""Feed-forward network (ReLU hidden layers, softmax output) trained with Adam.

The batch loss is the sum of per-sample cross-entropies.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..errors import EmptyTable, NonFiniteLoss
from .models import N_CLASSES, MlpConfig

logger = logging.getLogger("DRGrade.Classifiers")


# ----------------- Adam ------------------

class AdamState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(param, dtype=np.float64), v=np.zeros_like(param, dtype=np.float64))


def adam_update(param: np.ndarray, grad: np.ndarray, state: AdamState,
                cfg: MlpConfig) -> Tuple[np.ndarray, AdamState]:
    """One Adam step; returns the new parameter and the new state."""
    beta1, beta2 = cfg.adam_beta1, cfg.adam_beta2
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_param = param - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
    return new_param, AdamState(m=m, v=v, t=t)


# ----------------- Network ------------------

def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


class MLPNetwork:
    """Dense layers n_features -> hidden... -> n_classes."""

    def __init__(self, weights: List[np.ndarray], biases: List[np.ndarray]):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    @classmethod
    def initialize(cls, n_features: int, hidden_sizes: List[int], seed: int,
                   n_classes: int = N_CLASSES) -> "MLPNetwork":
        # He-style uniform: U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)), zero biases.
        rng = np.random.default_rng(seed)
        sizes = [n_features, *hidden_sizes, n_classes]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"W{i}"] = w
            params[f"b{i}"] = b
        return params

    def logits(self, X: np.ndarray) -> np.ndarray:
        h = X
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        return h @ self.weights[-1] + self.biases[-1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        logits = self.logits(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        return float(np.sum(log_norm - shifted[np.arange(len(y)), y]))

    def loss_and_gradients(self, X: np.ndarray, y: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        activations = [X]
        pre_activations = []
        h = X
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ w + b
            pre_activations.append(z)
            h = np.maximum(z, 0.0)
            activations.append(h)
        logits = h @ self.weights[-1] + self.biases[-1]

        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        rows = np.arange(len(y))
        loss = float(np.sum(log_norm - shifted[rows, y]))

        delta = _softmax(logits)
        delta[rows, y] -= 1.0
        grads: Dict[str, np.ndarray] = {}
        last = len(self.weights) - 1
        for layer in range(last, -1, -1):
            grads[f"W{layer}"] = activations[layer].T @ delta
            grads[f"b{layer}"] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (pre_activations[layer - 1] > 0)
        return loss, grads

    def state(self) -> Dict[str, list]:
        return {"weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_state(cls, state: Dict[str, list]) -> "MLPNetwork":
        return cls(state["weights"], state["biases"])


# ----------------- Training ------------------

def mlp_fit_arrays(X: np.ndarray, y: np.ndarray, cfg: MlpConfig) -> MLPNetwork:
    if len(X) == 0:
        raise EmptyTable("cannot train the network on an empty table")
    net = MLPNetwork.initialize(X.shape[1], cfg.hidden_sizes, cfg.seed)
    params = net.parameters()
    states = {name: AdamState.zeros_like(p) for name, p in params.items()}
    rng = np.random.default_rng(cfg.seed + 1)
    n = len(X)

    loss_total = float("nan")
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = net.loss_and_gradients(X[batch], y[batch])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch + 1}, batch starting {start}: "
                                    f"{loss} (max |W| = {max(np.abs(w).max() for w in net.weights):.3g})")
            loss_total += loss
            for name in params:
                params[name], states[name] = adam_update(params[name], grads[name], states[name], cfg)
            net.weights = [params[f"W{i}"] for i in range(len(net.weights))]
            net.biases = [params[f"b{i}"] for i in range(len(net.biases))]
        logger.debug(f"MLP epoch {epoch + 1}/{cfg.epochs}: mean loss {loss_total / n:.5f}")
    logger.info(f"MLP trained {cfg.epochs} epochs on {n} rows, final mean loss {loss_total / n:.5f}")
    return net


# ----------------- Gradient Check ------------------

def gradient_check(model, X: np.ndarray, y: np.ndarray, max_params: int = 200,
                   h: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``model`` exposes ``parameters()`` (arrays updated in place),
    ``loss(X, y)`` and ``loss_and_gradients(X, y)``.
    """
    _, grads = model.loss_and_gradients(X, y)
    params = model.parameters()
    slots = [(name, idx) for name, p in params.items() for idx in np.ndindex(p.shape)]
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(slots), size=min(max_params, len(slots)), replace=False)

    worst = 0.0
    for pick in picks:
        name, idx = slots[pick]
        param = params[name]
        original = param[idx]
        param[idx] = original + h
        loss_plus = model.loss(X, y)
        param[idx] = original - h
        loss_minus = model.loss(X, y)
        param[idx] = original
        g_fd = (loss_plus - loss_minus) / (2 * h)
        g_bp = grads[name][idx]
        rel = abs(g_bp - g_fd) / max(abs(g_bp) + abs(g_fd), 1e-8)
        worst = max(worst, rel)
    return worst


def mlp_gradient_check(model: MLPNetwork, X: np.ndarray, y: np.ndarray,
                       max_params: int = 200, seed: int = 0) -> float:
    return gradient_check(model, X, y, max_params=max_params, h=1e-5, seed=seed)
