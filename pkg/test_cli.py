#!/usr/bin/env python3
import json
import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from drgrade.cli import LOCK_FILE, build_parser, main
from drgrade.config import PipelineConfig, dump_config, load_config, parse_config, save_config
from drgrade.errors import ConfigError

REPO_CONFIG = Path(__file__).parent / "drgrade_config.toml"

FAST_CONFIG = """
seed = 1

[suite.mlp]
hidden_sizes = [16]
epochs = 20
learning_rate = 0.01

[suite.adaboost]
rounds = 10

[ablation]
kind = "DecisionTree"

[prep]
target_size = 64
blur_sigma = 2.0
"""


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    """Run every test from an empty directory with no DRGRADE_* variables set."""
    for name in ("DRGRADE_WORKDIR", "DRGRADE_SEED", "DRGRADE_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)


def _config_file(tmp_path, extra: str = "") -> str:
    path = tmp_path / "fast.toml"
    path.write_text(FAST_CONFIG + extra, encoding="utf-8")
    return str(path)


def _fundus(path: Path, size: int = 64) -> None:
    yy, xx = np.mgrid[:size, :size]
    disk = (xx - size / 2) ** 2 + (yy - size / 2) ** 2 < (size / 3) ** 2
    pixels = np.zeros((size, size, 3), dtype=np.uint8)
    pixels[disk] = (180, 90, 40)
    Image.fromarray(pixels).save(path)


# ----------------- Config ------------------

def test_repo_config_parses():
    config = parse_config(REPO_CONFIG.read_text(encoding="utf-8"), str(REPO_CONFIG))
    assert config.seed == 1
    assert len(config.suite.enabled) == 9


def test_config_dump_parse_round_trip(tmp_path):
    config = parse_config(FAST_CONFIG)
    assert parse_config(dump_config(config)) == config
    save_config(tmp_path / "saved.toml", config)
    assert load_config(tmp_path / "saved.toml", use_env=False) == config


@pytest.mark.parametrize("text", [
    "seed = [",
    "seed = -1",
    "colour = 'blue'",
    "[paths]\nwork_dir = 'x'",
    "log_level = 'LOUD'",
    "[suite]\nenabled = ['Perceptron']",
])
def test_invalid_config_raises_config_error(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_defaults_without_config_file():
    assert load_config(use_env=False) == PipelineConfig()


def test_explicit_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_environment_overrides_file(tmp_path, monkeypatch):
    monkeypatch.setenv("DRGRADE_SEED", "7")
    monkeypatch.setenv("DRGRADE_WORKDIR", str(tmp_path / "elsewhere"))
    monkeypatch.setenv("DRGRADE_LOG_LEVEL", "debug")
    config = load_config(_config_file(tmp_path))
    assert config.seed == 7
    assert config.paths.workdir == tmp_path / "elsewhere"
    assert config.log_level == "DEBUG"
    assert config.with_overrides(seed=3).seed == 3


def test_environment_seed_must_be_integer(monkeypatch):
    monkeypatch.setenv("DRGRADE_SEED", "seven")
    with pytest.raises(ConfigError):
        load_config()


def test_global_flags_work_on_either_side_of_subcommand():
    before = build_parser().parse_args(["--seed", "4", "train"])
    after = build_parser().parse_args(["train", "--seed", "4", "--kind", "KNN"])
    assert before.seed == after.seed == 4
    assert after.kind == "KNN"


# ----------------- Commands ------------------

def test_missing_config_file_exits_2(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "absent.toml"), "features"]) == 2
    assert "absent.toml" in capsys.readouterr().err


def test_prep_empty_directory(tmp_path, capsys):
    (tmp_path / "images").mkdir()
    assert main(["prep", "--workdir", str(tmp_path / "work")]) == 0
    assert "0 images" in capsys.readouterr().out


def test_prep_reports_unreadable_image(tmp_path, capsys):
    images = tmp_path / "images"
    images.mkdir()
    _fundus(images / "1_left.png")
    _fundus(images / "2_right.png")
    (images / "3_left.png").write_bytes(b"not a png")
    work = tmp_path / "work"

    assert main(["--config", _config_file(tmp_path), "--workdir", str(work), "prep"]) == 1
    out = capsys.readouterr().out
    assert "3 images: 2 prepared, 1 failed" in out
    assert "3_left.png" in out
    for stem in ("1_left", "2_right"):
        with Image.open(work / "prepared" / f"{stem}.png") as im:
            assert im.size == (64, 64)
    assert not (work / "prepared" / "3_left.png").exists()
    assert (work / "prep.failed").exists()


def test_train_without_features_names_missing_file(tmp_path, capsys):
    work = tmp_path / "work"
    assert main(["train", "--workdir", str(work)]) == 2
    assert "Missing required file" in capsys.readouterr().err
    assert "Missing required file" in (work / "train.failed").read_text()


def test_locked_workdir_exits_2(tmp_path, capsys):
    work = tmp_path / "work"
    work.mkdir()
    (work / LOCK_FILE).write_text(f"{os.getppid()}\n")
    assert main(["synth", "--workdir", str(work), "--images", "10"]) == 2
    assert "in use" in capsys.readouterr().err
    assert not (work / "synth").exists()


def test_stale_lock_is_taken_over(tmp_path):
    work = tmp_path / "work"
    work.mkdir()
    (work / LOCK_FILE).write_text("not-a-pid\n")
    assert main(["synth", "--workdir", str(work), "--images", "10"]) == 0
    assert not (work / LOCK_FILE).exists()


def test_failure_marker_cleared_by_successful_run(tmp_path):
    work = tmp_path / "work"
    assert main(["features", "--workdir", str(work)]) == 2
    assert (work / "features.failed").exists()
    assert main(["synth", "--workdir", str(work), "--images", "60"]) == 0
    assert main(["features", "--workdir", str(work)]) == 0
    assert not (work / "features.failed").exists()


def test_synth_pipeline_eval_and_grade(tmp_path):
    work = tmp_path / "work"
    config = _config_file(tmp_path)
    assert main(["--config", config, "synth", "--workdir", str(work), "--images", "300"]) == 0
    assert main(["--config", config, "--workdir", str(work), "pipeline"]) == 0

    summary = json.loads((work / "features.json").read_text())
    assert summary["seed"] == 1
    assert len(summary["feature_order"]) == 13
    report = json.loads((work / "report.json").read_text())
    assert len(report["results"]) == 9
    assert all(r["error"] is None for r in report["results"])
    assert len(json.loads((work / "ablation.json").read_text())["entries"]) == 5
    assert (work / "logs" / "drgrade.log").exists()

    first = (work / "report.txt").read_bytes(), (work / "report.json").read_bytes()
    assert main(["--config", config, "--workdir", str(work), "eval"]) == 0
    assert ((work / "report.txt").read_bytes(), (work / "report.json").read_bytes()) == first

    assert main(["--config", config, "--workdir", str(work), "grade", "--kind", "DecisionTree"]) == 0
    grades = pd.read_csv(work / "grades.csv", dtype={"image_id": str})
    assert list(grades.columns) == ["image_id", "predicted_label"]
    assert len(grades) == 300
    assert set(grades["predicted_label"]) <= {0, 1, 2}


def test_eval_with_missing_model_reports_failed_row(tmp_path):
    work = tmp_path / "work"
    config = _config_file(tmp_path, "\n[suite]\nenabled = ['DecisionTree', 'KNN']\n")
    assert main(["--config", config, "synth", "--workdir", str(work), "--images", "100"]) == 0
    assert main(["--config", config, "--workdir", str(work), "features"]) == 0
    assert main(["--config", config, "--workdir", str(work), "train", "--kind", "KNN"]) == 0
    assert main(["--config", config, "--workdir", str(work), "eval"]) == 1
    results = json.loads((work / "report.json").read_text())["results"]
    assert [r["kind"] for r in results] == ["KNN", "DecisionTree"]
    assert "Missing required file" in results[1]["error"]


@pytest.mark.parametrize("count", ["0", "-3"])
def test_synth_rejects_non_positive_image_count(tmp_path, capsys, count):
    work = tmp_path / "work"
    assert main(["synth", "--workdir", str(work), "--images", count]) == 2
    assert "positive" in capsys.readouterr().err
    assert (work / "synth.failed").exists()
