"""Per-image feature table: pruning, aggregation, filtering, balancing, scaling, split.

Stage order used by ``build_feature_table``::

    prune -> aggregate (+ severity remap) -> z-score filter
          -> undersample class 0 -> min-max normalize -> 80/10/10 split
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from .detect_io import ImageManifestEntry, LesionInstance
from .errors import EmptyTable, MissingArtifact, OrphanInstance, OutOfRange, SchemaMismatch, TooFewRows

logger = logging.getLogger("DRGrade.Features")

FEATURE_ORDER: List[str] = [
    "eye_code", "count_ex", "count_ma", "wsum_ex", "wsum_ma",
    "mean_cx_ex", "mean_cy_ex", "std_cx_ex", "std_cy_ex",
    "mean_cx_ma", "mean_cy_ma", "std_cx_ma", "std_cy_ma",
]
CSV_HEADER: List[str] = ["image_id", *FEATURE_ORDER, "label"]

FEATURE_GROUPS: Dict[str, List[str]] = {
    "eye": ["eye_code"],
    "counts": ["count_ex", "count_ma"],
    "weighted_area_sums": ["wsum_ex", "wsum_ma"],
    "center_means": ["mean_cx_ex", "mean_cy_ex", "mean_cx_ma", "mean_cy_ma"],
    "center_stds": ["std_cx_ex", "std_cy_ex", "std_cx_ma", "std_cy_ma"],
}

SEVERITY_REMAP = {0: 0, 1: 0, 2: 1, 3: 2, 4: 2}
EYE_CODES = {"Left": 0, "Right": 1}

Scaler = Dict[str, Tuple[float, float]]


# ----------------- Models ------------------

class FeatureConfig(BaseModel):
    ex_threshold: float = Field(0.65, ge=0, le=1)
    zscore_k: float = Field(2.0, gt=0)
    scaler_fit: Literal["full", "train_only"] = "full"


class ImageFeatureRow(BaseModel):
    image_id: str
    eye_code: int = Field(ge=0, le=1)
    count_ex: int = Field(ge=0)
    count_ma: int = Field(ge=0)
    wsum_ex: float = Field(ge=0)
    wsum_ma: float = Field(ge=0)
    mean_cx_ex: float = 0.0
    mean_cy_ex: float = 0.0
    std_cx_ex: float = 0.0
    std_cy_ex: float = 0.0
    mean_cx_ma: float = 0.0
    mean_cy_ma: float = 0.0
    std_cx_ma: float = 0.0
    std_cy_ma: float = 0.0
    label: int = Field(ge=0, le=2)


class StageCounts(BaseModel):
    images: int = 0
    instances_in: int = 0
    instances_pruned: int = 0
    aggregated: int = 0
    after_zscore: int = 0
    after_undersample: int = 0
    train: int = 0
    val: int = 0
    test: int = 0


class FeatureTable:
    """Rows of per-image features backed by a pandas frame.

    Numeric columns follow ``feature_order``; once normalized, ``scaler`` holds
    the per-column (min, max) used.
    """

    def __init__(self, frame: pd.DataFrame, feature_order: Optional[Sequence[str]] = None,
                 scaler: Optional[Scaler] = None):
        self.feature_order = list(feature_order or FEATURE_ORDER)
        missing = [c for c in ["image_id", *self.feature_order, "label"] if c not in frame.columns]
        if missing:
            raise SchemaMismatch(f"feature table is missing columns: {missing}")
        self.frame = frame[["image_id", *self.feature_order, "label"]].reset_index(drop=True)
        self.scaler = dict(scaler) if scaler is not None else None

    @classmethod
    def from_rows(cls, rows: Iterable[ImageFeatureRow], scaler: Optional[Scaler] = None) -> "FeatureTable":
        records = [row.model_dump() for row in rows]
        frame = pd.DataFrame.from_records(records, columns=CSV_HEADER)
        return cls(frame, FEATURE_ORDER, scaler)

    def __len__(self) -> int:
        return len(self.frame)

    def rows(self) -> List[ImageFeatureRow]:
        if self.feature_order != FEATURE_ORDER:
            raise SchemaMismatch("rows() needs the full feature order")
        return [ImageFeatureRow(**rec) for rec in self.frame.to_dict(orient="records")]

    @property
    def image_ids(self) -> List[str]:
        return self.frame["image_id"].tolist()

    def matrix(self) -> np.ndarray:
        return self.frame[self.feature_order].to_numpy(dtype=np.float64)

    def labels(self) -> np.ndarray:
        return self.frame["label"].to_numpy(dtype=np.int64)

    def select(self, columns: Sequence[str]) -> "FeatureTable":
        scaler = {c: self.scaler[c] for c in columns} if self.scaler is not None else None
        return FeatureTable(self.frame, list(columns), scaler)

    def take(self, positions: Sequence[int]) -> "FeatureTable":
        return FeatureTable(self.frame.iloc[list(positions)], self.feature_order, self.scaler)

    def to_csv(self, path: Union[str, Path]) -> None:
        self.frame.to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def from_csv(cls, path: Union[str, Path], scaler: Optional[Scaler] = None) -> "FeatureTable":
        path = Path(path)
        if not path.exists():
            raise MissingArtifact(path)
        frame = pd.read_csv(path, dtype={"image_id": str}, float_precision="round_trip")
        if list(frame.columns[:1]) != ["image_id"] or list(frame.columns[-1:]) != ["label"]:
            raise SchemaMismatch(f"{path} does not look like a feature table")
        return cls(frame, [c for c in frame.columns if c not in ("image_id", "label")], scaler)


class SplitSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    train: FeatureTable
    val: FeatureTable
    test: FeatureTable
    seed: int
    scaler: Optional[Scaler] = None

    @property
    def feature_order(self) -> List[str]:
        return self.train.feature_order

    def select(self, columns: Sequence[str]) -> "SplitSet":
        return SplitSet(train=self.train.select(columns), val=self.val.select(columns),
                        test=self.test.select(columns), seed=self.seed,
                        scaler={c: self.scaler[c] for c in columns} if self.scaler else None)

    def save(self, directory: Union[str, Path]) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.train.to_csv(directory / "train.csv")
        self.val.to_csv(directory / "val.csv")
        self.test.to_csv(directory / "test.csv")
        save_scaler(directory / "scaler.json", self.scaler or {})

    @classmethod
    def load(cls, directory: Union[str, Path], seed: int = 0) -> "SplitSet":
        directory = Path(directory)
        scaler = load_scaler(directory / "scaler.json")
        return cls(train=FeatureTable.from_csv(directory / "train.csv", scaler),
                   val=FeatureTable.from_csv(directory / "val.csv", scaler),
                   test=FeatureTable.from_csv(directory / "test.csv", scaler),
                   seed=seed, scaler=scaler)


def save_scaler(path: Union[str, Path], scaler: Scaler) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({col: [lo, hi] for col, (lo, hi) in scaler.items()}, f, indent=2)


def load_scaler(path: Union[str, Path]) -> Scaler:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(path)
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return {col: (float(lo), float(hi)) for col, (lo, hi) in data.items()}


# ----------------- Stages ------------------

def prune_low_confidence(instances: Sequence[LesionInstance], ex_threshold: float = 0.65) -> List[LesionInstance]:
    """Drop EX instances strictly below ex_threshold; MA instances always survive."""
    return [inst for inst in instances
            if inst.lesion_type != "EX" or inst.confidence >= ex_threshold]


def weighted_area(inst: LesionInstance) -> float:
    return inst.confidence * inst.mask_area


def remap_severity(raw: int) -> int:
    if raw not in SEVERITY_REMAP:
        raise OutOfRange(f"raw severity {raw!r} not in 0..4")
    return SEVERITY_REMAP[raw]


def aggregate_per_image(manifest: Sequence[ImageManifestEntry],
                        instances: Sequence[LesionInstance]) -> List[ImageFeatureRow]:
    """One feature row per manifest entry, in manifest order."""
    known = {entry.image_id for entry in manifest}
    for inst in instances:
        if inst.image_id not in known:
            raise OrphanInstance(inst.image_id)

    lesions = pd.DataFrame.from_records(
        [(inst.image_id, inst.lesion_type, inst.center[0], inst.center[1], weighted_area(inst))
         for inst in instances],
        columns=["image_id", "lesion_type", "cx", "cy", "warea"],
    )
    # Fixed summation order: results do not depend on detection file order.
    lesions = lesions.sort_values(["image_id", "lesion_type", "cx", "cy", "warea"], kind="mergesort")
    stats: Dict[str, pd.DataFrame] = {}
    for lesion_type in ("EX", "MA"):
        subset = lesions[lesions["lesion_type"] == lesion_type]
        grouped = subset.groupby("image_id", sort=False)
        stats[lesion_type] = pd.DataFrame({
            "count": grouped.size(),
            "wsum": grouped["warea"].sum(),
            "mean_cx": grouped["cx"].mean(),
            "mean_cy": grouped["cy"].mean(),
            "std_cx": grouped["cx"].std(ddof=0),
            "std_cy": grouped["cy"].std(ddof=0),
        })

    rows: List[ImageFeatureRow] = []
    for entry in manifest:
        values = {"image_id": entry.image_id, "eye_code": EYE_CODES[entry.eye],
                  "label": remap_severity(entry.severity_raw)}
        for lesion_type, suffix in (("EX", "ex"), ("MA", "ma")):
            table = stats[lesion_type]
            if entry.image_id in table.index:
                rec = table.loc[entry.image_id]
                values[f"count_{suffix}"] = int(rec["count"])
                values[f"wsum_{suffix}"] = float(rec["wsum"])
                for stat in ("mean_cx", "mean_cy", "std_cx", "std_cy"):
                    values[f"{stat}_{suffix}"] = float(rec[stat])
            else:
                values[f"count_{suffix}"] = 0
                values[f"wsum_{suffix}"] = 0.0
        rows.append(ImageFeatureRow(**values))
    return rows


def zscore_filter(rows: Sequence[ImageFeatureRow], k: float = 2.0) -> List[ImageFeatureRow]:
    """Single pass: drop a row if any column has |x - mean| > k * std (population std)."""
    if not rows:
        return []
    values = FeatureTable.from_rows(rows).matrix()
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    outside = (np.abs(values - mean) > k * std) & (std > 0)
    keep = ~outside.any(axis=1)
    return [row for row, kept in zip(rows, keep) if kept]


def undersample_majority(rows: Sequence[ImageFeatureRow], seed: int) -> List[ImageFeatureRow]:
    """Randomly thin class 0 down to the largest non-zero class; never oversample."""
    labels = np.array([row.label for row in rows], dtype=np.int64)
    counts = np.bincount(labels, minlength=3)
    target = int(counts[1:].max())
    if counts[0] <= target:
        return list(rows)
    zero_positions = np.flatnonzero(labels == 0)
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(zero_positions, size=target, replace=False).tolist())
    return [row for pos, row in enumerate(rows) if row.label != 0 or pos in chosen]


def fit_scaler(table: FeatureTable) -> Scaler:
    if len(table) == 0:
        raise EmptyTable()
    values = table.matrix()
    return {col: (float(values[:, i].min()), float(values[:, i].max()))
            for i, col in enumerate(table.feature_order)}


def apply_scaler(table: FeatureTable, scaler: Scaler) -> FeatureTable:
    """Map each column by (x - min) / (max - min); constant columns map to 0."""
    missing = [c for c in table.feature_order if c not in scaler]
    if missing:
        raise SchemaMismatch(f"scaler has no range for columns: {missing}")
    frame = table.frame.copy()
    for col in table.feature_order:
        lo, hi = scaler[col]
        column = frame[col].astype(np.float64)
        frame[col] = (column - lo) / (hi - lo) if hi > lo else 0.0
    return FeatureTable(frame, table.feature_order, {c: scaler[c] for c in table.feature_order})


def minmax_normalize(table: FeatureTable) -> FeatureTable:
    return apply_scaler(table, fit_scaler(table))


def _split_positions(n: int, seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n < 10:
        raise TooFewRows(f"need at least 10 rows to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train, n_val = (8 * n) // 10, n // 10
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def split(table: FeatureTable, seed: int) -> SplitSet:
    """Seeded shuffle, then floor(0.8N) train, floor(0.1N) val, the rest test."""
    train, val, test = _split_positions(len(table), seed)
    return SplitSet(train=table.take(train), val=table.take(val), test=table.take(test),
                    seed=seed, scaler=table.scaler)


def build_feature_table(manifest: Sequence[ImageManifestEntry], detections: Sequence[LesionInstance],
                        config: Optional[FeatureConfig] = None, seed: int = 0,
                        counts: Optional[StageCounts] = None) -> SplitSet:
    config = config or FeatureConfig()
    counts = counts if counts is not None else StageCounts()
    counts.images = len(manifest)
    counts.instances_in = len(detections)

    pruned = prune_low_confidence(detections, config.ex_threshold)
    counts.instances_pruned = len(detections) - len(pruned)
    rows = aggregate_per_image(manifest, pruned)
    counts.aggregated = len(rows)
    rows = zscore_filter(rows, config.zscore_k)
    counts.after_zscore = len(rows)
    rows = undersample_majority(rows, seed)
    counts.after_undersample = len(rows)
    logger.info(f"Pruned {counts.instances_pruned} EX instances; rows: {counts.aggregated} aggregated, "
                f"{counts.after_zscore} after z-score, {counts.after_undersample} after undersampling")

    table = FeatureTable.from_rows(rows)
    if len(table) == 0:
        raise EmptyTable("no rows left after filtering")
    if config.scaler_fit == "full":
        splits = split(minmax_normalize(table), seed)
    else:
        raw = split(table, seed)
        scaler = fit_scaler(raw.train)
        splits = SplitSet(train=apply_scaler(raw.train, scaler), val=apply_scaler(raw.val, scaler),
                          test=apply_scaler(raw.test, scaler), seed=seed, scaler=scaler)

    counts.train, counts.val, counts.test = len(splits.train), len(splits.val), len(splits.test)
    logger.info(f"Split {len(table)} rows into {counts.train}/{counts.val}/{counts.test}")
    return splits
