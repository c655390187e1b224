#!/usr/bin/env python3
import json

import numpy as np
import pandas as pd
import pytest

from drgrade import evaluation
from drgrade.classifiers import MlpConfig, SuiteConfig, fit_model
from drgrade.errors import (ConfigError, EmptyInput, InvalidGroups, LengthMismatch, OutOfRangeLabel,
                            SolverDiverged)
from drgrade.evaluation import (ablation, accuracy, check_groups, confusion_matrix, evaluate_model,
                                evaluate_suite, format_percent, majority_baseline)
from drgrade.features import FEATURE_GROUPS, FEATURE_ORDER, FeatureTable, split


def _splits(n: int = 300, seed: int = 0, informative: str = "wsum_ex"):
    """Label is a threshold function of one column; every other column is noise or zero."""
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame({column: np.zeros(n) for column in FEATURE_ORDER})
    frame[informative] = rng.uniform(size=n)
    frame["count_ex"] = rng.uniform(size=n)
    frame["eye_code"] = rng.integers(0, 2, size=n).astype(np.float64)
    frame.insert(0, "image_id", [f"img{i}" for i in range(n)])
    frame["label"] = np.digitize(frame[informative], [1 / 3, 2 / 3])
    return split(FeatureTable(frame), seed)


# ----------------- Metrics ------------------

def test_accuracy():
    assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0
    assert accuracy([0, 1, 2, 0], [0, 1, 1, 0]) == 0.75
    with pytest.raises(LengthMismatch):
        accuracy([0, 1], [0])
    with pytest.raises(EmptyInput):
        accuracy([], [])


def test_format_percent():
    assert format_percent(0.9255) == "92.55"
    assert format_percent(1.0) == "100.00"


def test_confusion_matrix():
    assert confusion_matrix([0, 1, 2], [0, 1, 2]) == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    assert confusion_matrix([0], [2]) == [[0, 0, 0], [0, 0, 0], [1, 0, 0]]
    with pytest.raises(OutOfRangeLabel):
        confusion_matrix([3], [0])


def test_confusion_trace_equals_accuracy():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pred, truth = rng.integers(0, 3, size=50), rng.integers(0, 3, size=50)
        matrix = np.array(confusion_matrix(pred, truth))
        assert np.trace(matrix) / 50 == pytest.approx(accuracy(pred, truth))
        np.testing.assert_array_equal(matrix.sum(axis=1), np.bincount(truth, minlength=3))


def test_majority_baseline():
    splits = _splits()
    counts = np.bincount(splits.test.labels(), minlength=3)
    assert majority_baseline(splits) == counts.max() / counts.sum()


# ----------------- Suite ------------------

def test_suite_beats_majority_baseline():
    splits = _splits(n=400)
    kinds = ["MLP", "DecisionTree", "NaiveBayes", "KNN", "AdaBoost"]
    suite = SuiteConfig(enabled=kinds, mlp=MlpConfig(epochs=60, learning_rate=0.01))
    report = evaluate_suite(splits, suite)
    assert sorted(r.kind for r in report.results) == sorted(kinds)
    for result in report.results:
        assert result.error is None
        assert result.test_accuracy >= report.majority_baseline + 0.05, result.name
    accuracies = [r.test_accuracy for r in report.results]
    assert accuracies == sorted(accuracies, reverse=True)


def test_suite_with_only_mlp():
    report = evaluate_suite(_splits(), SuiteConfig(enabled=["MLP"], mlp=MlpConfig(epochs=5)))
    assert [r.kind for r in report.results] == ["MLP"]
    assert "Neural Network" in report.render()


def test_suite_needs_a_classifier():
    with pytest.raises(ConfigError):
        evaluate_suite(_splits(), SuiteConfig(enabled=[]))


def test_failed_classifier_is_reported_last(monkeypatch):
    def broken_fit(kind, train, suite):
        if kind == "KNN":
            raise SolverDiverged("boom")
        return fit_model(kind, train, suite)

    monkeypatch.setattr(evaluation, "fit_model", broken_fit)
    report = evaluate_suite(_splits(), SuiteConfig(enabled=["KNN", "DecisionTree", "NaiveBayes"]))
    assert [r.kind for r in report.results][-1] == "KNN"
    assert report.results[-1].error == "boom"
    assert "failed" in report.render()


def test_unexpected_classifier_error_does_not_abort_suite(monkeypatch):
    def broken_fit(kind, train, suite):
        if kind == "DecisionTree":
            raise IndexError("index 9 is out of bounds")
        return fit_model(kind, train, suite)

    monkeypatch.setattr(evaluation, "fit_model", broken_fit)
    report = evaluate_suite(_splits(), SuiteConfig(enabled=["DecisionTree", "KNN", "NaiveBayes"]))
    assert [r.kind for r in report.results][-1] == "DecisionTree"
    assert report.results[-1].error == "index 9 is out of bounds"
    assert all(r.error is None for r in report.results[:-1])


def test_parallel_suite_matches_serial():
    splits = _splits()
    kinds = ["DecisionTree", "NaiveBayes", "KNN", "LogisticRegression"]
    serial = evaluate_suite(splits, SuiteConfig(enabled=kinds))
    parallel = evaluate_suite(splits, SuiteConfig(enabled=kinds, workers=4))
    assert serial.model_dump_json() == parallel.model_dump_json()


def test_evaluate_model_and_report_files(tmp_path):
    splits = _splits()
    result = evaluate_model(fit_model("DecisionTree", splits.train), splits)
    assert sum(map(sum, result.confusion)) == len(splits.test)
    report = evaluation.assemble_report([result], splits)
    report.save(tmp_path)
    assert json.loads((tmp_path / "report.json").read_text())["results"][0]["kind"] == "DecisionTree"
    assert "Decision Tree" in (tmp_path / "report.txt").read_text()


# ----------------- Ablation ------------------

def test_ablation_ranks_informative_group_first():
    report = ablation(_splits(), "DecisionTree")
    assert report.entries[0].group == "weighted_area_sums"
    deltas = [e.delta for e in report.entries]
    assert deltas == sorted(deltas, reverse=True)
    for entry in report.entries:
        assert entry.delta == pytest.approx(entry.baseline_accuracy - entry.ablated_accuracy)


def test_ablation_constant_group_has_no_effect():
    report = ablation(_splits(), "DecisionTree")
    stds = next(e for e in report.entries if e.group == "center_stds")
    assert abs(stds.delta) <= 0.02


def test_ablation_rejects_bad_groups_before_training(monkeypatch):
    def must_not_train(*args, **kwargs):
        raise AssertionError("trained before validating groups")

    monkeypatch.setattr(evaluation, "fit_model", must_not_train)
    groups = dict(FEATURE_GROUPS)
    groups["eye"] = ["eye_code", "count_ex"]
    with pytest.raises(InvalidGroups):
        ablation(_splits(), "DecisionTree", groups=groups)
    with pytest.raises(InvalidGroups):
        check_groups({"only": ["eye_code"]}, FEATURE_ORDER)


def test_ablation_report_files(tmp_path):
    report = ablation(_splits(), "NaiveBayes")
    report.save(tmp_path)
    assert (tmp_path / "ablation.txt").read_text().startswith("Ablation with Naive Bayes")
    assert len(json.loads((tmp_path / "ablation.json").read_text())["entries"]) == 5
