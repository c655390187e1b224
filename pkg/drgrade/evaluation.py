"""Accuracy, confusion matrices, the multi-classifier report and the feature-group ablation."""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from .classifiers import DISPLAY_NAMES, N_CLASSES, SuiteConfig, TrainedModel, fit_model, predict
from .errors import ConfigError, DRGradeError, EmptyInput, InvalidGroups, LengthMismatch, OutOfRangeLabel
from .features import FEATURE_GROUPS, SplitSet

logger = logging.getLogger("DRGrade.Eval")


# ----------------- Metrics ------------------

def accuracy(pred: Sequence[int], truth: Sequence[int]) -> float:
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions for {len(truth)} labels")
    if len(truth) == 0:
        raise EmptyInput("accuracy of an empty label vector")
    return float(np.mean(np.asarray(pred) == np.asarray(truth)))


def confusion_matrix(pred: Sequence[int], truth: Sequence[int], n_classes: int = N_CLASSES) -> List[List[int]]:
    """Entry (i, j) counts samples of true class i predicted as j."""
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions for {len(truth)} labels")
    pred_arr = np.asarray(pred, dtype=np.int64)
    truth_arr = np.asarray(truth, dtype=np.int64)
    for arr in (pred_arr, truth_arr):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise OutOfRangeLabel(f"labels must lie in 0..{n_classes - 1}")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (truth_arr, pred_arr), 1)
    return matrix.tolist()


def format_percent(value: Optional[float]) -> str:
    if value is None:
        return "n/a"
    return f"{value * 100:.2f}"


def majority_baseline(splits: SplitSet) -> float:
    labels = splits.test.labels()
    if len(labels) == 0:
        return 0.0
    return float(np.bincount(labels, minlength=N_CLASSES).max() / len(labels))


# ----------------- Suite Report ------------------

class ClassifierResult(BaseModel):
    kind: str
    name: str
    val_accuracy: Optional[float] = None
    test_accuracy: Optional[float] = None
    confusion: Optional[List[List[int]]] = None
    error: Optional[str] = None


class EvalReport(BaseModel):
    results: List[ClassifierResult]
    majority_baseline: float
    n_train: int
    n_val: int
    n_test: int

    def render(self) -> str:
        width = max([len("Classifier"), *(len(r.name) for r in self.results)])
        lines = [f"{'Classifier':<{width}} | {'Val Acc (%)':>11} | {'Test Acc (%)':>12}",
                 f"{'-' * width}-+-{'-' * 11}-+-{'-' * 12}"]
        for r in self.results:
            if r.error is not None:
                lines.append(f"{r.name:<{width}} | {'failed':>11} | {'failed':>12}  ({r.error})")
            else:
                lines.append(f"{r.name:<{width}} | {format_percent(r.val_accuracy):>11} | "
                             f"{format_percent(r.test_accuracy):>12}")
        lines.append("")
        lines.append(f"Majority-class baseline (test): {format_percent(self.majority_baseline)}")
        lines.append(f"Rows: train {self.n_train}, val {self.n_val}, test {self.n_test}")
        return "\n".join(lines) + "\n"

    def save(self, directory: Union[str, Path], stem: str = "report") -> None:
        directory = Path(directory)
        (directory / f"{stem}.txt").write_text(self.render(), encoding="utf-8")
        (directory / f"{stem}.json").write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")


def evaluate_model(model: TrainedModel, splits: SplitSet) -> ClassifierResult:
    test_pred = predict(model, splits.test)
    val_pred = predict(model, splits.val)
    return ClassifierResult(
        kind=model.kind, name=DISPLAY_NAMES[model.kind],
        val_accuracy=accuracy(val_pred, splits.val.labels()) if len(splits.val) else None,
        test_accuracy=accuracy(test_pred, splits.test.labels()),
        confusion=confusion_matrix(test_pred, splits.test.labels()),
    )


def failed_result(kind: str, error: Exception) -> ClassifierResult:
    logger.error(f"{kind} failed: {error}")
    return ClassifierResult(kind=kind, name=DISPLAY_NAMES[kind], error=str(error) or type(error).__name__)


def assemble_report(results: Sequence[ClassifierResult], splits: SplitSet) -> EvalReport:
    """Sort by test accuracy (descending, stable in roster order); failures go last."""
    ordered = sorted(results, key=lambda r: (r.error is not None, -(r.test_accuracy or 0.0)))
    return EvalReport(results=ordered, majority_baseline=majority_baseline(splits),
                      n_train=len(splits.train), n_val=len(splits.val), n_test=len(splits.test))


def fit_and_evaluate(kind: str, splits: SplitSet, suite: SuiteConfig):
    """Returns (model or None, result); fit errors become a failed result."""
    try:
        model = fit_model(kind, splits.train, suite)
        return model, evaluate_model(model, splits)
    except DRGradeError as e:
        return None, failed_result(kind, e)
    except Exception as e:
        logger.exception(f"{kind} raised {type(e).__name__}")
        return None, failed_result(kind, e)


def evaluate_suite(splits: SplitSet, configs: Optional[SuiteConfig] = None) -> EvalReport:
    configs = configs or SuiteConfig()
    kinds = list(configs.enabled)
    if not kinds:
        raise ConfigError("no classifier enabled")
    if configs.workers > 1:
        with ThreadPoolExecutor(max_workers=configs.workers) as pool:
            outcomes = list(pool.map(lambda kind: fit_and_evaluate(kind, splits, configs), kinds))
    else:
        outcomes = [fit_and_evaluate(kind, splits, configs) for kind in kinds]
    report = assemble_report([result for _, result in outcomes], splits)
    logger.info(f"Evaluated {len(kinds)} classifiers; best: {report.results[0].name}")
    return report


# ----------------- Ablation ------------------

class AblationEntry(BaseModel):
    group: str
    columns: List[str]
    baseline_accuracy: float
    ablated_accuracy: float
    delta: float


class AblationReport(BaseModel):
    kind: str
    baseline_accuracy: float
    entries: List[AblationEntry]

    def render(self) -> str:
        width = max([len("Feature group"), *(len(e.group) for e in self.entries)])
        lines = [f"Ablation with {DISPLAY_NAMES.get(self.kind, self.kind)} "
                 f"(baseline test accuracy {format_percent(self.baseline_accuracy)})",
                 f"{'Feature group':<{width}} | {'Without (%)':>11} | {'Delta (pp)':>10}",
                 f"{'-' * width}-+-{'-' * 11}-+-{'-' * 10}"]
        for e in self.entries:
            lines.append(f"{e.group:<{width}} | {format_percent(e.ablated_accuracy):>11} | "
                         f"{e.delta * 100:>10.2f}")
        return "\n".join(lines) + "\n"

    def save(self, directory: Union[str, Path], stem: str = "ablation") -> None:
        directory = Path(directory)
        (directory / f"{stem}.txt").write_text(self.render(), encoding="utf-8")
        (directory / f"{stem}.json").write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")


def check_groups(groups: Dict[str, List[str]], feature_order: Sequence[str]) -> None:
    seen: List[str] = [col for cols in groups.values() for col in cols]
    if len(seen) != len(set(seen)):
        raise InvalidGroups("feature groups overlap")
    if set(seen) != set(feature_order):
        missing = sorted(set(feature_order) - set(seen))
        extra = sorted(set(seen) - set(feature_order))
        raise InvalidGroups(f"feature groups do not partition the features (missing {missing}, unknown {extra})")


def _test_accuracy(kind: str, splits: SplitSet, suite: SuiteConfig) -> float:
    model = fit_model(kind, splits.train, suite)
    return accuracy(predict(model, splits.test), splits.test.labels())


def ablation(splits: SplitSet, kind: str = "MLP", suite: Optional[SuiteConfig] = None,
             groups: Optional[Dict[str, List[str]]] = None) -> AblationReport:
    """Retrain without each feature group; delta = baseline - ablated, ranked descending."""
    suite = suite or SuiteConfig()
    groups = groups or FEATURE_GROUPS
    check_groups(groups, splits.feature_order)

    baseline = _test_accuracy(kind, splits, suite)
    entries = []
    for name, columns in groups.items():
        remaining = [c for c in splits.feature_order if c not in columns]
        ablated = _test_accuracy(kind, splits.select(remaining), suite) if remaining else 0.0
        logger.info(f"Ablation {kind}: without {name} -> {ablated:.4f} (baseline {baseline:.4f})")
        entries.append(AblationEntry(group=name, columns=list(columns), baseline_accuracy=baseline,
                                     ablated_accuracy=ablated, delta=baseline - ablated))
    entries.sort(key=lambda e: -e.delta)
    return AblationReport(kind=kind, baseline_accuracy=baseline, entries=entries)
