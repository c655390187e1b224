#!/usr/bin/env python3
import math

import numpy as np
import pandas as pd
import pytest

from drgrade.classifiers import (AdamState, MLPNetwork, MlpConfig, adam_update, gradient_check,
                                 mlp_fit, mlp_gradient_check)
from drgrade.classifiers.linear import LogisticRegression
from drgrade.classifiers.mlp import mlp_fit_arrays
from drgrade.errors import EmptyTable, NonFiniteLoss
from drgrade.features import FEATURE_ORDER, FeatureTable


def _blobs(n_per_class: int, seed: int, spread: float = 5.0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [spread, 0.0], [0.0, spread]])
    X = np.vstack([rng.normal(c, 1.0, size=(n_per_class, 2)) for c in centers])
    y = np.repeat(np.arange(3), n_per_class)
    return X, y


# ----------------- Adam ------------------

def test_adam_matches_reference_recursion():
    cfg = MlpConfig(learning_rate=0.01)
    param = np.array([1.0])
    state = AdamState.zeros_like(param)
    p, m, v = 1.0, 0.0, 0.0
    for t in range(1, 101):
        grad = 2.0 * (p - 3.0)
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad * grad
        p = p - 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)

        param, state = adam_update(param, np.array([2.0 * (param[0] - 3.0)]), state, cfg)
        assert abs(param[0] - p) <= 1e-12
    assert state.t == 100


def test_adam_first_step_moves_by_learning_rate():
    cfg = MlpConfig(learning_rate=0.001)
    param, state = adam_update(np.array([0.5, -2.0]), np.array([4.0, -0.25]),
                               AdamState.zeros_like(np.zeros(2)), cfg)
    np.testing.assert_allclose(param, [0.5 - 0.001, -2.0 + 0.001], atol=1e-9)
    assert state.t == 1


# ----------------- Loss and gradients ------------------

def test_zero_network_loss_is_log3_per_sample():
    net = MLPNetwork([np.zeros((13, 75)), np.zeros((75, 75)), np.zeros((75, 3))],
                     [np.zeros(75), np.zeros(75), np.zeros(3)])
    X = np.random.default_rng(0).normal(size=(8, 13))
    y = np.array([0, 1, 2, 0, 1, 2, 0, 1])
    assert net.loss(X, y) == pytest.approx(8 * math.log(3), rel=1e-12)
    np.testing.assert_allclose(net.predict_proba(X), np.full((8, 3), 1 / 3))


def test_duplicated_sample_doubles_gradient():
    net = MLPNetwork.initialize(13, [75, 75], seed=3)
    x = np.random.default_rng(1).normal(size=(1, 13))
    _, single = net.loss_and_gradients(x, np.array([2]))
    _, double = net.loss_and_gradients(np.vstack([x, x]), np.array([2, 2]))
    for name in single:
        np.testing.assert_allclose(double[name], 2 * single[name], rtol=1e-12, atol=1e-15)


def test_mlp_gradient_check():
    rng = np.random.default_rng(5)
    net = MLPNetwork.initialize(13, [75, 75], seed=5)
    X = rng.normal(size=(6, 13))
    y = rng.integers(0, 3, size=6)
    before = {k: v.copy() for k, v in net.parameters().items()}
    assert mlp_gradient_check(net, X, y, max_params=200) < 1e-4
    for name, value in net.parameters().items():
        np.testing.assert_array_equal(value, before[name])


def test_logistic_gradient_check():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(20, 4))
    y = rng.integers(0, 3, size=20)
    model = LogisticRegression()
    model.W, model.b = rng.normal(size=(4, 3)), rng.normal(size=3)
    assert gradient_check(model, X, y, max_params=15) < 1e-4


# ----------------- Training ------------------

def test_mlp_learns_gaussian_blobs():
    X, y = _blobs(500, seed=0)
    order = np.random.default_rng(1).permutation(len(y))
    X, y = X[order], y[order]
    net = mlp_fit_arrays(X[:1200], y[:1200], MlpConfig(epochs=100, learning_rate=0.001))
    assert np.mean(net.predict(X[1200:]) == y[1200:]) >= 0.95


def test_mlp_training_is_deterministic():
    X, y = _blobs(40, seed=2)
    cfg = MlpConfig(epochs=5, hidden_sizes=[8])
    a, b = mlp_fit_arrays(X, y, cfg), mlp_fit_arrays(X, y, cfg)
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)


def test_mlp_fit_on_feature_table_records_schema():
    X, y = _blobs(20, seed=4)
    frame = pd.DataFrame({column: np.zeros(len(y)) for column in FEATURE_ORDER})
    frame["eye_code"], frame["count_ex"] = X[:, 0], X[:, 1]
    frame.insert(0, "image_id", [f"img{i}" for i in range(len(y))])
    frame["label"] = y
    table = FeatureTable(frame)
    model = mlp_fit(table, MlpConfig(epochs=2, hidden_sizes=[4]))
    assert model.kind == "MLP"
    assert model.feature_order == FEATURE_ORDER
    assert len(model.params["weights"]) == 2


def test_mlp_rejects_empty_table():
    with pytest.raises(EmptyTable):
        mlp_fit_arrays(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), MlpConfig())


def test_mlp_non_finite_input_raises():
    X, y = _blobs(10, seed=0)
    X[3, 1] = np.nan
    with pytest.raises(NonFiniteLoss):
        mlp_fit_arrays(X, y, MlpConfig(epochs=1))


def test_mlp_memorizes_single_sample():
    x = np.random.default_rng(9).normal(size=(1, 13))
    for label in range(3):
        net = mlp_fit_arrays(x, np.array([label]), MlpConfig(epochs=50, learning_rate=0.01))
        assert list(net.predict(x)) == [label]
