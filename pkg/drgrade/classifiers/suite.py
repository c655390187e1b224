"""Uniform fit / predict over every classifier kind."""
import logging
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel

from ..errors import EmptyTable, SchemaMismatch
from ..features import FeatureTable
from .bayes import GaussianNaiveBayes
from .boosting import AdaBoost
from .knn import KNearestNeighbors
from .linear import LinearSVM, LogisticRegression
from .mlp import MLPNetwork, mlp_fit_arrays
from .models import (ALL_KINDS, N_CLASSES, AdaBoostConfig, KnnConfig, LogisticConfig, MlpConfig,
                     NaiveBayesConfig, SuiteConfig, SvmConfig, TrainedModel, TreeConfig)
from .svm import KernelSVM
from .tree import DecisionTree

logger = logging.getLogger("DRGrade.Classifiers")

CONFIG_TYPES = {
    "MLP": MlpConfig, "DecisionTree": TreeConfig, "NaiveBayes": NaiveBayesConfig,
    "LogisticRegression": LogisticConfig, "KNN": KnnConfig, "AdaBoost": AdaBoostConfig,
    "SvmLinear": SvmConfig, "SvmPoly": SvmConfig, "SvmRbf": SvmConfig,
}


def _check_training_table(train: FeatureTable) -> None:
    if len(train) == 0:
        raise EmptyTable("training table is empty")
    labels = train.labels()
    if labels.min() < 0 or labels.max() >= N_CLASSES:
        raise SchemaMismatch(f"labels must lie in 0..{N_CLASSES - 1}")


def _new_estimator(kind: str, params: BaseModel):
    if kind == "DecisionTree":
        return DecisionTree(params)
    if kind == "NaiveBayes":
        return GaussianNaiveBayes(params)
    if kind == "LogisticRegression":
        return LogisticRegression(params)
    if kind == "KNN":
        return KNearestNeighbors(params)
    if kind == "AdaBoost":
        return AdaBoost(params)
    if kind == "SvmLinear":
        return LinearSVM(params)
    if kind == "SvmPoly":
        return KernelSVM("poly", params)
    if kind == "SvmRbf":
        return KernelSVM("rbf", params)
    raise ValueError(f"not a classical classifier kind: {kind!r}")


def _document(kind: str, state: dict, train: FeatureTable, params: BaseModel) -> TrainedModel:
    return TrainedModel(kind=kind, params=state, feature_order=list(train.feature_order),
                        scaler=train.scaler, config=params.model_dump())


def mlp_fit(train: FeatureTable, cfg: Optional[MlpConfig] = None) -> TrainedModel:
    cfg = cfg or MlpConfig()
    _check_training_table(train)
    net = mlp_fit_arrays(train.matrix(), train.labels(), cfg)
    return _document("MLP", net.state(), train, cfg)


def fit_classical(kind: str, train: FeatureTable, params: Optional[BaseModel] = None) -> TrainedModel:
    params = params or CONFIG_TYPES[kind]()
    _check_training_table(train)
    logger.info(f"Fitting {kind} on {len(train)} rows")
    estimator = _new_estimator(kind, params).fit(train.matrix(), train.labels())
    return _document(kind, estimator.state(), train, params)


def fit_model(kind: str, train: FeatureTable, suite: Optional[SuiteConfig] = None) -> TrainedModel:
    suite = suite or SuiteConfig()
    if kind == "MLP":
        return mlp_fit(train, suite.mlp)
    return fit_classical(kind, train, suite.config_for(kind))


def estimator_from_model(model: TrainedModel):
    config = CONFIG_TYPES[model.kind](**model.config)
    if model.kind == "MLP":
        return MLPNetwork.from_state(model.params)
    if model.kind in ("SvmPoly", "SvmRbf"):
        return KernelSVM.from_state(model.params, config)
    return type(_new_estimator(model.kind, config)).from_state(model.params, config)


def predict(model: TrainedModel, rows: FeatureTable) -> List[int]:
    """One label per row; rows must carry exactly the model's feature order."""
    if list(rows.feature_order) != list(model.feature_order):
        raise SchemaMismatch(f"feature order {rows.feature_order} does not match model "
                             f"{model.feature_order}")
    if len(rows) == 0:
        return []
    labels = estimator_from_model(model).predict(rows.matrix())
    return [int(v) for v in labels]
