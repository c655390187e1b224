#!/usr/bin/env python3
"""Command-line front end: one subcommand per pipeline stage.

Exit codes: 0 success, 1 runtime failure, 2 configuration, schema or
missing-input error. A failed command leaves ``<workdir>/<command>.failed``
holding the error message; a later successful run removes it.
"""
import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Dict, List, Optional

import pandas as pd

from . import __version__
from .classifiers import ALL_KINDS, fit_model, load_model, predict, save_model
from .config import PipelineConfig, load_config
from .detect_io import load_detections, load_manifest
from .errors import ConfigError, DRGradeError, MissingArtifact, WorkdirLocked
from .evaluation import ablation, assemble_report, evaluate_model, failed_result
from .features import (FeatureTable, SplitSet, StageCounts, aggregate_per_image, apply_scaler,
                       build_feature_table, prune_low_confidence)
from .imageprep import IMAGE_SUFFIXES, load_image, preprocess_image, save_image
from .synth import write_synthetic

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOCK_FILE = "drgrade.lock"

logger = logging.getLogger("DRGrade.CLI")


# ----------------- Plumbing ------------------

def setup_logging(workdir: Optional[Path], level: str) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if workdir is not None:
        log_dir = workdir / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.insert(0, logging.FileHandler(log_dir / "drgrade.log"))
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, handlers=handlers, force=True)


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


@contextmanager
def workdir_lock(workdir: Path):
    """Advisory PID lock; a lock left by a dead process is taken over."""
    lock = workdir / LOCK_FILE
    if lock.exists():
        try:
            pid = int(lock.read_text().strip())
        except ValueError:
            pid = None
        if pid is not None and pid != os.getpid() and _pid_alive(pid):
            raise WorkdirLocked(f"{workdir} is in use by process {pid} (lock file {lock})")
        logger.warning(f"Removing stale lock file {lock}")
        lock.unlink()
    lock.write_text(f"{os.getpid()}\n")
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _print_table_summary(title: str, text: str) -> None:
    print(title)
    print(text, end="")


def _model_path(workdir: Path, kind: str) -> Path:
    return workdir / f"model.{kind}.json"


# ----------------- Commands ------------------

def cmd_prep(config: PipelineConfig, args: argparse.Namespace) -> int:
    images_dir = config.paths.images_dir
    if not images_dir.is_dir():
        raise ConfigError(f"Images directory not found: {images_dir}")
    out_dir = config.paths.workdir / "prepared"
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)

    failures: Dict[str, str] = {}
    for path in paths:
        try:
            prepared = preprocess_image(load_image(path), config.prep, image_id=path.stem)
            save_image(out_dir / f"{path.stem}.png", prepared)
            logger.debug(f"Prepared {path.name}")
        except (DRGradeError, OSError, ValueError) as e:
            failures[path.name] = str(e) or type(e).__name__
            logger.error(f"Failed to prepare {path.name}: {failures[path.name]}")

    print(f"{len(paths)} images: {len(paths) - len(failures)} prepared, {len(failures)} failed")
    for name, reason in failures.items():
        print(f"  FAILED {name}: {reason}")
    return 1 if failures else 0


def cmd_synth(config: PipelineConfig, args: argparse.Namespace) -> int:
    n_images = args.images if getattr(args, "images", None) is not None else config.synth.images
    if n_images < 1:
        raise ConfigError(f"--images must be a positive integer, got {n_images}")
    manifest_path, detections_path = write_synthetic(config.paths.workdir, config.seed, n_images,
                                                     config.synth.rule)
    print(f"Wrote {n_images} synthetic images to {manifest_path} and {detections_path}")
    return 0


def cmd_features(config: PipelineConfig, args: argparse.Namespace) -> int:
    workdir = config.paths.workdir
    manifest = load_manifest(config.paths.manifest())
    detections = load_detections(config.paths.detections())
    counts = StageCounts()
    splits = build_feature_table(manifest, detections, config.features, seed=config.seed, counts=counts)
    splits.save(workdir)
    summary = {
        "seed": config.seed,
        "feature_order": splits.feature_order,
        "config": config.features.model_dump(),
        "counts": counts.model_dump(),
    }
    (workdir / "features.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"Feature rows: {counts.aggregated} aggregated, {counts.after_zscore} after z-score, "
          f"{counts.after_undersample} after undersampling")
    print(f"Splits: train {counts.train}, val {counts.val}, test {counts.test}")
    return 0


def _kinds(config: PipelineConfig, args: argparse.Namespace) -> List[str]:
    kind = getattr(args, "kind", None)
    return [kind] if kind else list(config.suite.enabled)


def cmd_train(config: PipelineConfig, args: argparse.Namespace) -> int:
    workdir = config.paths.workdir
    splits = SplitSet.load(workdir, seed=config.seed)
    suite = config.seeded_suite()
    failed = []
    for kind in _kinds(config, args):
        try:
            save_model(_model_path(workdir, kind), fit_model(kind, splits.train, suite))
            print(f"Trained {kind}")
        except (DRGradeError, ValueError, ArithmeticError) as e:
            logger.error(f"Training {kind} failed: {e}")
            print(f"FAILED {kind}: {e}")
            failed.append(kind)
    return 1 if failed else 0


def cmd_eval(config: PipelineConfig, args: argparse.Namespace) -> int:
    workdir = config.paths.workdir
    splits = SplitSet.load(workdir, seed=config.seed)
    kinds = list(config.suite.enabled)
    results = []
    for kind in kinds:
        try:
            results.append(evaluate_model(load_model(_model_path(workdir, kind)), splits))
        except DRGradeError as e:
            results.append(failed_result(kind, e))
    report = assemble_report(results, splits)
    report.save(workdir)
    _print_table_summary("Classifier accuracy", report.render())
    return 1 if any(r.error for r in report.results) else 0


def cmd_ablate(config: PipelineConfig, args: argparse.Namespace) -> int:
    workdir = config.paths.workdir
    splits = SplitSet.load(workdir, seed=config.seed)
    report = ablation(splits, config.ablation.kind, config.seeded_suite(), config.ablation.groups)
    report.save(workdir)
    _print_table_summary("Feature-group ablation", report.render())
    return 0


def cmd_pipeline(config: PipelineConfig, args: argparse.Namespace) -> int:
    status = 0
    stages: List[Callable[[PipelineConfig, argparse.Namespace], int]] = []
    if config.run_prep:
        stages.append(cmd_prep)
    stages += [cmd_features, cmd_train, cmd_eval, cmd_ablate]
    for stage in stages:
        logger.info(f"Pipeline stage: {stage.__name__[4:]}")
        status = max(status, stage(config, args))
    return status


def cmd_grade(config: PipelineConfig, args: argparse.Namespace) -> int:
    workdir = config.paths.workdir
    model = load_model(_model_path(workdir, args.kind))
    if model.scaler is None:
        raise MissingArtifact(f"scaler for {_model_path(workdir, args.kind)}")
    manifest = load_manifest(Path(args.manifest) if args.manifest else config.paths.manifest())
    detections = load_detections(Path(args.detections) if args.detections else config.paths.detections())

    rows = aggregate_per_image(manifest, prune_low_confidence(detections, config.features.ex_threshold))
    table = FeatureTable.from_rows(rows).select(model.feature_order)
    labels = predict(model, apply_scaler(table, model.scaler))

    output = Path(args.output) if args.output else workdir / "grades.csv"
    pd.DataFrame({"image_id": table.image_ids, "predicted_label": labels}).to_csv(
        output, index=False, lineterminator="\n")
    print(f"Graded {len(labels)} images with {model.kind}; wrote {output}")
    return 0


COMMANDS: Dict[str, Callable[[PipelineConfig, argparse.Namespace], int]] = {
    "prep": cmd_prep, "features": cmd_features, "train": cmd_train, "eval": cmd_eval,
    "ablate": cmd_ablate, "synth": cmd_synth, "pipeline": cmd_pipeline, "grade": cmd_grade,
}


# ----------------- Main ------------------

def _global_options(parser: argparse.ArgumentParser, default) -> None:
    parser.add_argument("--config", default=default, help="TOML config file")
    parser.add_argument("--seed", type=int, default=default, help="Seed for every stochastic stage")
    parser.add_argument("--workdir", default=default, help="Directory for all artifacts")
    parser.add_argument("--verbose", action="store_true", default=default, help="Log at DEBUG level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drgrade",
                                     description="Diabetic retinopathy severity grading from lesion detections")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, None)
    # Global flags are accepted after the subcommand too.
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, argparse.SUPPRESS)
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("prep", parents=[common], help="Crop, circularize and contrast-blend fundus images")
    synth_parser = subparsers.add_parser("synth", parents=[common], help="Write a synthetic manifest and detection file")
    synth_parser.add_argument("--images", type=int, help="Number of synthetic images")
    subparsers.add_parser("features", parents=[common], help="Build normalized train/val/test feature tables")
    train_parser = subparsers.add_parser("train", parents=[common], help="Fit classifiers on the train split")
    train_parser.add_argument("--kind", choices=ALL_KINDS, help="Train only this classifier")
    subparsers.add_parser("eval", parents=[common], help="Evaluate trained classifiers and write the report")
    subparsers.add_parser("ablate", parents=[common], help="Leave-one-feature-group-out ablation")
    subparsers.add_parser("pipeline", parents=[common], help="Run features, train, eval and ablate in order")
    grade_parser = subparsers.add_parser("grade", parents=[common], help="Predict severity for new detections")
    grade_parser.add_argument("--kind", choices=ALL_KINDS, default="MLP", help="Saved model to apply")
    grade_parser.add_argument("--manifest", help="Manifest CSV (defaults to the configured one)")
    grade_parser.add_argument("--detections", help="Detections JSONL (defaults to the configured one)")
    grade_parser.add_argument("--output", help="Output CSV (defaults to <workdir>/grades.csv)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config).with_overrides(
            workdir=args.workdir, seed=args.seed, log_level="DEBUG" if args.verbose else None)
        workdir = config.paths.workdir
        workdir.mkdir(parents=True, exist_ok=True)
    except (DRGradeError, OSError) as e:
        setup_logging(None, "INFO")
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code if isinstance(e, DRGradeError) else 2

    setup_logging(workdir, config.log_level)
    marker = workdir / f"{args.command}.failed"
    try:
        with workdir_lock(workdir):
            logger.info(f"Running {args.command} in {workdir} (seed {config.seed})")
            status = COMMANDS[args.command](config, args)
    except DRGradeError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        marker.write_text(f"{e}\n", encoding="utf-8")
        return e.exit_code
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        print(f"error: {e}", file=sys.stderr)
        marker.write_text(f"{type(e).__name__}: {e}\n", encoding="utf-8")
        return 1

    if status == 0:
        marker.unlink(missing_ok=True)
    else:
        marker.write_text(f"{args.command} finished with failures (exit {status})\n", encoding="utf-8")
    return status


if __name__ == "__main__":
    sys.exit(main())
