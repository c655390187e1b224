"""Synthetic manifests and detection sets with a recoverable severity signal.

Each image draws a raw grade, then a total confidence-weighted lesion area
inside that grade's band of ``SeverityRule.thresholds`` (kept ``band_margin``
away from the band edges). The area is shared between EX and MA instances
whose counts are independent of the grade, so the weighted-area sums carry
the whole signal. Extra low-confidence EX instances are added as noise; the
EX pruning rule removes them before the rule is evaluated.
"""
import logging
import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .detect_io import (ImageManifestEntry, LesionInstance, MIN_CONFIDENCE,
                        write_detections, write_manifest)

logger = logging.getLogger("DRGrade.Synth")


class SeverityRule(BaseModel):
    # Raw grade g covers weighted areas in [thresholds[g-1], thresholds[g]).
    thresholds: List[float] = [400.0, 800.0, 1600.0, 2000.0]
    max_area: float = 2400.0
    grade_probs: List[float] = [1 / 6, 1 / 6, 1 / 3, 1 / 6, 1 / 6]
    band_margin: float = Field(0.1, ge=0, lt=0.5)
    healthy_fraction: float = Field(0.3, ge=0, le=1)
    ex_threshold: float = 0.65
    ex_rate: float = Field(3.0, ge=0)
    ma_rate: float = Field(5.0, ge=0)
    noise_ex_rate: float = Field(1.0, ge=0)
    image_size: int = Field(1024, ge=32)

    @model_validator(mode="after")
    def _consistent(self) -> "SeverityRule":
        if len(self.thresholds) != 4 or len(self.grade_probs) != 5:
            raise ValueError("need 4 thresholds and 5 grade probabilities")
        edges = [0.0, *self.thresholds, self.max_area]
        if any(a >= b for a, b in zip(edges, edges[1:])):
            raise ValueError("thresholds must increase strictly within (0, max_area)")
        if abs(sum(self.grade_probs) - 1.0) > 1e-9:
            raise ValueError("grade_probs must sum to 1")
        return self

    def band(self, grade: int) -> Tuple[float, float]:
        edges = [0.0, *self.thresholds, self.max_area]
        return edges[grade], edges[grade + 1]

    def severity_for(self, weighted_area: float) -> int:
        return int(np.searchsorted(self.thresholds, weighted_area, side="right"))

    def weighted_area_of(self, instances: List[LesionInstance]) -> float:
        return sum(inst.confidence * inst.mask_area for inst in instances
                   if inst.lesion_type == "MA" or inst.confidence >= self.ex_threshold)


def _lesion(rng: np.random.Generator, image_id: str, eye: str, lesion_type: str,
            weighted_area: float, confidence: float, severity: int, size: int) -> LesionInstance:
    mask_area = weighted_area / confidence
    side = math.ceil(math.sqrt(mask_area)) + 2
    half = side / 2.0
    # Lesion centers fall inside the fundus disk.
    radius = (size / 2.0 - half - 1) * math.sqrt(rng.uniform())
    angle = rng.uniform(0.0, 2 * math.pi)
    cx = round(size / 2.0 + radius * math.cos(angle), 1)
    cy = round(size / 2.0 + radius * math.sin(angle), 1)
    return LesionInstance(
        image_id=image_id, eye=eye, lesion_type=lesion_type,
        bbox=(cx - half, cy - half, cx + half, cy + half), center=(cx, cy),
        mask_area=mask_area, confidence=confidence, severity_raw=severity,
    )


def synth_detections(seed: int, n_images: int,
                     rule: Optional[SeverityRule] = None) -> Tuple[List[ImageManifestEntry], List[LesionInstance]]:
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    rule = rule or SeverityRule()
    rng = np.random.default_rng(seed)
    manifest: List[ImageManifestEntry] = []
    detections: List[LesionInstance] = []
    width = len(str(n_images))

    for index in range(n_images):
        eye = "Left" if rng.uniform() < 0.5 else "Right"
        image_id = f"img{index:0{width}d}_{eye.lower()}"
        grade = int(rng.choice(5, p=rule.grade_probs))
        if grade == 0 and rng.uniform() < rule.healthy_fraction:
            total = 0.0
        else:
            lo, hi = rule.band(grade)
            pad = rule.band_margin * (hi - lo)
            total = rng.uniform(lo + pad, hi - pad)

        ex_share = rng.uniform(0.2, 0.8)
        image_lesions: List[LesionInstance] = []
        if total > 0:
            for lesion_type, share, rate, floor in (("EX", ex_share, rule.ex_rate, rule.ex_threshold),
                                                    ("MA", 1.0 - ex_share, rule.ma_rate, MIN_CONFIDENCE)):
                count = 1 + int(rng.poisson(rate))
                parts = rng.dirichlet(np.ones(count)) * share * total
                for part in parts:
                    confidence = round(float(rng.uniform(floor, 1.0)), 4)
                    image_lesions.append(_lesion(rng, image_id, eye, lesion_type, float(part),
                                                 max(confidence, floor), grade, rule.image_size))
            for _ in range(int(rng.poisson(rule.noise_ex_rate))):
                confidence = round(float(rng.uniform(MIN_CONFIDENCE, rule.ex_threshold)), 4)
                confidence = min(max(confidence, MIN_CONFIDENCE), rule.ex_threshold - 1e-4)
                area = float(rng.uniform(20.0, 200.0)) * confidence
                image_lesions.append(_lesion(rng, image_id, eye, "EX", area, confidence,
                                             grade, rule.image_size))

        manifest.append(ImageManifestEntry(image_id=image_id, eye=eye, severity_raw=grade))
        detections.extend(image_lesions)

    logger.info(f"Synthesized {len(manifest)} images and {len(detections)} lesion instances (seed {seed})")
    return manifest, detections


def write_synthetic(workdir: Union[str, Path], seed: int, n_images: int,
                    rule: Optional[SeverityRule] = None) -> Tuple[Path, Path]:
    out_dir = Path(workdir) / "synth"
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest, detections = synth_detections(seed, n_images, rule)
    manifest_path = out_dir / "manifest.csv"
    detections_path = out_dir / "detections.jsonl"
    write_manifest(manifest_path, manifest)
    write_detections(detections_path, detections)
    return manifest_path, detections_path
