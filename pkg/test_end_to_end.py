#!/usr/bin/env python3
"""Full pipeline on the seeded 2000-image synthetic fixture."""
import json
from pathlib import Path

import pytest

from drgrade.cli import main

REPO_CONFIG = str(Path(__file__).parent / "drgrade_config.toml")
ARTIFACTS = ("report.txt", "report.json", "ablation.txt", "ablation.json",
             "train.csv", "val.csv", "test.csv", "scaler.json")


def _run(workdir: Path) -> None:
    assert main(["--config", REPO_CONFIG, "--seed", "1", "--workdir", str(workdir), "synth", "--images", "2000"]) == 0
    assert main(["--config", REPO_CONFIG, "--seed", "1", "--workdir", str(workdir), "pipeline"]) == 0


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    path = tmp_path_factory.mktemp("e2e") / "work"
    _run(path)
    return path


def test_mlp_accuracy(workdir):
    report = json.loads((workdir / "report.json").read_text())
    mlp = next(r for r in report["results"] if r["kind"] == "MLP")
    assert mlp["test_accuracy"] >= 0.90


def test_every_classifier_beats_majority_baseline(workdir):
    report = json.loads((workdir / "report.json").read_text())
    assert len(report["results"]) == 9
    for result in report["results"]:
        assert result["error"] is None
        assert result["test_accuracy"] >= report["majority_baseline"] + 0.05, result["name"]


def test_weighted_areas_matter_most(workdir):
    ablation = json.loads((workdir / "ablation.json").read_text())
    assert ablation["entries"][0]["group"] == "weighted_area_sums"


def test_repeat_run_is_byte_identical(workdir, tmp_path):
    _run(tmp_path / "again")
    for name in ARTIFACTS:
        assert (workdir / name).read_bytes() == (tmp_path / "again" / name).read_bytes(), name
