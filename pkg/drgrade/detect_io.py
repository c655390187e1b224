"""Lesion-detection records, the dataset manifest and detector backends.

Detections are JSON Lines, one lesion instance per line::

    {"image_id": "10_left", "eye": "Left", "lesion_type": "EX",
     "bbox": [x0, y0, x1, y1], "center": [cx, cy], "mask_area": 120.0,
     "confidence": 0.8, "severity_raw": 2}

The manifest is a CSV with header ``image_id,eye,severity_raw``.
"""
import csv
import json
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Protocol, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from .errors import DuplicateId, MissingArtifact, ParseError, UnknownImage, ValidationError
from .imageprep import PreparedImage

logger = logging.getLogger("DRGrade.DetectIO")

MIN_CONFIDENCE = 0.35
MAX_INSTANCES_PER_IMAGE = 256
DETECTION_FIELDS = ("image_id", "eye", "lesion_type", "bbox", "center",
                    "mask_area", "confidence", "severity_raw")
MANIFEST_HEADER = ["image_id", "eye", "severity_raw"]

Eye = Literal["Left", "Right"]
LesionType = Literal["EX", "MA"]


# ----------------- Record Models ------------------

class LesionInstance(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    image_id: str = Field(min_length=1)
    eye: Eye
    lesion_type: LesionType
    bbox: Tuple[float, float, float, float]
    center: Tuple[float, float]
    mask_area: float = Field(gt=0)
    confidence: float = Field(ge=MIN_CONFIDENCE, le=1.0)
    severity_raw: int = Field(ge=0, le=4)

    @model_validator(mode="after")
    def _geometry(self) -> "LesionInstance":
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError("degenerate bbox: need x0 < x1 and y0 < y1")
        cx, cy = self.center
        if not (x0 <= cx <= x1 and y0 <= cy <= y1):
            raise ValueError("center lies outside bbox")
        if abs(cx - (x0 + x1) / 2) > 0.5 or abs(cy - (y0 + y1) / 2) > 0.5:
            raise ValueError("center differs from bbox midpoint by more than 0.5 px")
        if self.mask_area > (x1 - x0) * (y1 - y0):
            raise ValueError("mask_area exceeds bbox area")
        return self


class ImageManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_id: str = Field(min_length=1)
    eye: Eye
    severity_raw: int = Field(ge=0, le=4)


def _reason(error: PydanticValidationError) -> str:
    first = error.errors()[0]
    loc = ".".join(str(part) for part in first.get("loc", ()))
    msg = first.get("msg", "invalid value")
    return f"{loc}: {msg}" if loc else msg


# ----------------- Detections ------------------

def parse_detection_line(text: str, line: int) -> LesionInstance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(line, f"invalid JSON ({e.msg})")
    if not isinstance(data, dict):
        raise ParseError(line, "record is not a JSON object")
    try:
        return LesionInstance(**data)
    except PydanticValidationError as e:
        raise ValidationError(line, _reason(e))


def load_detections(path: Union[str, Path]) -> List[LesionInstance]:
    """Parse and validate a detection file; record order is preserved."""
    records: List[LesionInstance] = []
    per_image: Counter = Counter()
    if not Path(path).exists():
        raise MissingArtifact(path)
    with open(path, "r", encoding="utf-8") as f:
        for line_no, text in enumerate(f, start=1):
            if not text.strip():
                continue
            record = parse_detection_line(text, line_no)
            per_image[record.image_id] += 1
            if per_image[record.image_id] > MAX_INSTANCES_PER_IMAGE:
                raise ValidationError(
                    line_no,
                    f"more than {MAX_INSTANCES_PER_IMAGE} instances for image {record.image_id!r}",
                )
            records.append(record)
    logger.info(f"Loaded {len(records)} lesion instances for {len(per_image)} images from {path}")
    return records


def write_detections(path: Union[str, Path], records: Sequence[LesionInstance]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record.model_dump(mode="json")) + "\n")


# ----------------- Manifest ------------------

def load_manifest(path: Union[str, Path]) -> List[ImageManifestEntry]:
    entries: List[ImageManifestEntry] = []
    seen: Dict[str, int] = {}
    if not Path(path).exists():
        raise MissingArtifact(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != MANIFEST_HEADER:
            raise ParseError(1, f"manifest header must be {','.join(MANIFEST_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ParseError(line_no, f"expected 3 columns, got {len(row)}")
            image_id, eye, severity = (cell.strip() for cell in row)
            try:
                severity_raw = int(severity)
            except ValueError:
                raise ParseError(line_no, f"severity_raw is not an integer: {severity!r}")
            try:
                entry = ImageManifestEntry(image_id=image_id, eye=eye, severity_raw=severity_raw)
            except PydanticValidationError as e:
                raise ValidationError(line_no, _reason(e))
            if image_id in seen:
                raise DuplicateId(image_id, line_no)
            seen[image_id] = line_no
            entries.append(entry)
    logger.info(f"Loaded manifest with {len(entries)} images from {path}")
    return entries


def write_manifest(path: Union[str, Path], entries: Sequence[ImageManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for entry in entries:
            writer.writerow([entry.image_id, entry.eye, entry.severity_raw])


# ----------------- Detector Backends ------------------

class DetectorBackend(Protocol):
    def detect(self, image_id: str) -> List[LesionInstance]:
        ...


class FileDetectorBackend:
    """Serves precomputed detections loaded from a detection file.

    Images listed in the manifest but absent from the detections are healthy
    and yield an empty list; ids in neither raise UnknownImage.
    """

    def __init__(self, detections: Sequence[LesionInstance],
                 manifest: Optional[Sequence[ImageManifestEntry]] = None):
        index: Dict[str, List[LesionInstance]] = {}
        for record in detections:
            index.setdefault(record.image_id, []).append(record)
        self._index: Mapping[str, Tuple[LesionInstance, ...]] = {
            image_id: tuple(items) for image_id, items in index.items()
        }
        self._known = frozenset(entry.image_id for entry in manifest or ())

    @classmethod
    def from_files(cls, detections_path, manifest_path=None) -> "FileDetectorBackend":
        manifest = load_manifest(manifest_path) if manifest_path else None
        return cls(load_detections(detections_path), manifest)

    def detect(self, image_id: str) -> List[LesionInstance]:
        if image_id in self._index:
            return list(self._index[image_id])
        if image_id in self._known:
            return []
        raise UnknownImage(image_id)


def detect(backend: DetectorBackend, image: Union[PreparedImage, str]) -> List[LesionInstance]:
    if isinstance(image, PreparedImage):
        if image.image_id is None:
            raise UnknownImage("<prepared image without id>")
        image_id = image.image_id
    else:
        image_id = image
    return backend.detect(image_id)
