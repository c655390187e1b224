"""Classifier configs and the serialized model document."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator

from ..errors import MissingArtifact, SchemaMismatch, UnknownFormatVersion

logger = logging.getLogger("DRGrade.Classifiers")

FORMAT_VERSION = 1
N_CLASSES = 3

Kind = Literal["MLP", "DecisionTree", "NaiveBayes", "LogisticRegression", "KNN",
               "AdaBoost", "SvmLinear", "SvmPoly", "SvmRbf"]
ALL_KINDS: List[str] = ["MLP", "DecisionTree", "NaiveBayes", "LogisticRegression", "KNN",
                        "AdaBoost", "SvmLinear", "SvmPoly", "SvmRbf"]
DISPLAY_NAMES: Dict[str, str] = {
    "MLP": "Neural Network",
    "DecisionTree": "Decision Tree",
    "NaiveBayes": "Naive Bayes",
    "LogisticRegression": "Logistic Regression",
    "KNN": "KNN",
    "AdaBoost": "AdaBoost",
    "SvmLinear": "SVM - Linear",
    "SvmPoly": "SVM - Polynomial",
    "SvmRbf": "SVM - RBF",
}


# ----------------- Configs ------------------

class MlpConfig(BaseModel):
    hidden_sizes: List[int] = [75, 75]
    activation: Literal["relu"] = "relu"
    learning_rate: float = Field(0.001, gt=0)
    epochs: int = Field(100, ge=1)
    batch_size: int = Field(32, ge=1)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_epsilon: float = Field(1e-8, gt=0)
    seed: int = 0

    @field_validator("hidden_sizes")
    @classmethod
    def _non_empty(cls, value: List[int]) -> List[int]:
        if not value or any(size < 1 for size in value):
            raise ValueError("hidden_sizes must be a non-empty list of positive sizes")
        return value


class TreeConfig(BaseModel):
    max_depth: int = Field(10, ge=1)
    min_samples_leaf: int = Field(1, ge=1)


class NaiveBayesConfig(BaseModel):
    var_floor: float = Field(1e-9, gt=0)


class LogisticConfig(BaseModel):
    l2: float = Field(1e-4, ge=0)
    iterations: int = Field(500, ge=1)
    learning_rate: float = Field(1.0, gt=0)


class KnnConfig(BaseModel):
    k: int = Field(5, ge=1)


class AdaBoostConfig(BaseModel):
    rounds: int = Field(50, ge=1)


class SvmConfig(BaseModel):
    C: float = Field(1.0, gt=0)
    degree: int = Field(3, ge=1)
    coef0: float = 1.0
    gamma: Optional[float] = Field(None, gt=0)  # None -> 1 / n_features
    tol: float = Field(1e-3, gt=0)
    max_passes: int = Field(10, ge=1)
    max_iter: int = Field(100, ge=1)
    linear_epochs: int = Field(20, ge=1)
    seed: int = 0


class SuiteConfig(BaseModel):
    enabled: List[Kind] = list(ALL_KINDS)
    mlp: MlpConfig = MlpConfig()
    tree: TreeConfig = TreeConfig()
    naive_bayes: NaiveBayesConfig = NaiveBayesConfig()
    logistic: LogisticConfig = LogisticConfig()
    knn: KnnConfig = KnnConfig()
    adaboost: AdaBoostConfig = AdaBoostConfig()
    svm: SvmConfig = SvmConfig()
    workers: int = Field(1, ge=1)

    def with_seed(self, seed: int) -> "SuiteConfig":
        return self.model_copy(update={
            "mlp": self.mlp.model_copy(update={"seed": seed}),
            "svm": self.svm.model_copy(update={"seed": seed}),
        })

    def config_for(self, kind: str) -> BaseModel:
        return {
            "MLP": self.mlp, "DecisionTree": self.tree, "NaiveBayes": self.naive_bayes,
            "LogisticRegression": self.logistic, "KNN": self.knn, "AdaBoost": self.adaboost,
            "SvmLinear": self.svm, "SvmPoly": self.svm, "SvmRbf": self.svm,
        }[kind]


# ----------------- Model Document ------------------

class TrainedModel(BaseModel):
    kind: Kind
    params: Dict[str, Any]
    feature_order: List[str]
    scaler: Optional[Dict[str, Tuple[float, float]]] = None
    config: Dict[str, Any] = {}
    n_classes: int = N_CLASSES
    format_version: int = FORMAT_VERSION


def save_model(path: Union[str, Path], model: TrainedModel) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(model.model_dump_json(indent=2))
    logger.info(f"Saved {model.kind} model to {path}")


def load_model(path: Union[str, Path]) -> TrainedModel:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(path)
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise UnknownFormatVersion(f"{path}: unsupported format_version {version!r}")
    try:
        return TrainedModel(**data)
    except Exception as e:
        raise SchemaMismatch(f"{path}: invalid model document ({e})")
