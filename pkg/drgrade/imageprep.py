"""Fundus image preprocessing.

Crop the blank margins, stretch the eye into a centered circle at a fixed
square resolution, then normalize contrast by blending the image with a
Gaussian-blurred copy of itself (weights 4 / -4, offset 128).

Images are numpy arrays of dtype uint8, shaped (H, W) or (H, W, C).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import ndimage

from .errors import EmptyImage, ValidationError

logger = logging.getLogger("DRGrade.ImagePrep")

RawImage = np.ndarray


# ----------------- Models ------------------

class PrepConfig(BaseModel):
    blank_threshold: int = Field(7, ge=0, le=255)
    target_size: int = 1024
    blur_sigma: float = Field(20.0, gt=0)
    weight_original: float = 4.0
    weight_blurred: float = -4.0
    gamma_offset: float = 128.0

    @field_validator("target_size")
    @classmethod
    def _even_and_large_enough(cls, value: int) -> int:
        if value < 32 or value % 2:
            raise ValueError("target_size must be even and >= 32")
        return value


class PreparedImage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    pixels: np.ndarray
    mask_radius: float
    image_id: Optional[str] = None

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


# ----------------- Helpers ------------------

def _check_image(img: RawImage) -> None:
    if not isinstance(img, np.ndarray) or img.ndim not in (2, 3):
        raise ValidationError(None, "image must be a 2-D or 3-D array")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValidationError(None, "image must be at least 1x1")
    if img.ndim == 3 and img.shape[2] not in (1, 3):
        raise ValidationError(None, "image must have 1 or 3 channels")


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x ** 2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _separable_blur(values: np.ndarray, sigma: float) -> np.ndarray:
    """Float64 separable Gaussian over the two spatial axes, reflect borders."""
    kernel = _gaussian_kernel(sigma)
    out = ndimage.correlate1d(values.astype(np.float64), kernel, axis=0, mode="reflect")
    return ndimage.correlate1d(out, kernel, axis=1, mode="reflect")


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def circle_mask(size: int) -> np.ndarray:
    """Boolean mask of the circle inscribed in a size x size square (pixel centers)."""
    centers = np.arange(size, dtype=np.float64) + 0.5 - size / 2.0
    dist2 = centers[:, None] ** 2 + centers[None, :] ** 2
    return dist2 <= (size / 2.0) ** 2


def _apply_mask(pixels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = pixels.copy()
    out[~mask] = 0
    return out


# ----------------- Operations ------------------

def crop_blank_margins(img: RawImage, threshold: int = 7) -> RawImage:
    """Tight bounding box of every pixel whose max-channel intensity exceeds threshold."""
    _check_image(img)
    intensity = img.max(axis=2) if img.ndim == 3 else img
    mask = intensity > threshold
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise EmptyImage()
    return img[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].copy()


def gaussian_blur(img: RawImage, sigma: float) -> RawImage:
    if not sigma > 0:
        raise ValidationError(None, f"blur sigma must be > 0, got {sigma}")
    _check_image(img)
    return _to_uint8(_separable_blur(img, sigma))


def masked_gaussian_blur(img: RawImage, mask: np.ndarray, sigma: float) -> RawImage:
    """Gaussian blur that only averages pixels inside ``mask``.

    Pixels outside the mask come back as 0.
    """
    if not sigma > 0:
        raise ValidationError(None, f"blur sigma must be > 0, got {sigma}")
    weights = mask.astype(np.float64)
    if img.ndim == 3:
        weights3 = weights[:, :, None]
        numerator = _separable_blur(img * weights3, sigma)
        denominator = _separable_blur(np.broadcast_to(weights3, img.shape), sigma)
    else:
        numerator = _separable_blur(img * weights, sigma)
        denominator = _separable_blur(weights, sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        blurred = np.where(denominator > 0, numerator / denominator, 0.0)
    return _apply_mask(_to_uint8(blurred), mask)


def _sample_bilinear(values: np.ndarray, size: int) -> np.ndarray:
    """Float64 bilinear resample of a 2-D or 3-D array, pixel-center aligned."""
    height, width = values.shape[:2]
    rows = (np.arange(size) + 0.5) * height / size - 0.5
    cols = (np.arange(size) + 0.5) * width / size - 0.5
    coords = np.stack(np.meshgrid(rows, cols, indexing="ij"))
    values = values.astype(np.float64)
    if values.ndim == 2:
        return ndimage.map_coordinates(values, coords, order=1, mode="nearest")
    return np.stack([ndimage.map_coordinates(values[:, :, ch], coords, order=1, mode="nearest")
                     for ch in range(values.shape[2])], axis=-1)


def resize_bilinear(img: RawImage, size: int) -> RawImage:
    return _to_uint8(_sample_bilinear(img, size))


def _resample_support(img: RawImage, support: np.ndarray, size: int) -> np.ndarray:
    """Resample using only non-blank source pixels.

    Each output pixel averages the supported samples under its bilinear
    footprint; pixels with no supported sample take their nearest covered
    neighbour's value.
    """
    weights = _sample_bilinear(support.astype(np.float64), size)
    weighted = img * support[:, :, None] if img.ndim == 3 else img * support
    numerator = _sample_bilinear(weighted, size)
    covered = weights > 1e-9
    if img.ndim == 3:
        weights = weights[:, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(covered if img.ndim == 2 else covered[:, :, None], numerator / weights, 0.0)
    if not covered.all():
        _, (near_r, near_c) = ndimage.distance_transform_edt(~covered, return_indices=True)
        out = out[near_r, near_c]
    return _to_uint8(out)


def circularize(img: RawImage, cfg: PrepConfig) -> PreparedImage:
    _check_image(img)
    intensity = img.max(axis=2) if img.ndim == 3 else img
    support = intensity > cfg.blank_threshold
    if not support.any():
        raise EmptyImage()
    size = cfg.target_size
    resized = _resample_support(img, support, size)
    mask = circle_mask(size)
    # The mask bounding box is the full square, so the second crop is a no-op.
    return PreparedImage(pixels=_apply_mask(resized, mask), mask_radius=size / 2.0)


def contrast_blend(img: PreparedImage, cfg: PrepConfig) -> PreparedImage:
    mask = circle_mask(img.size)
    blurred = masked_gaussian_blur(img.pixels, mask, cfg.blur_sigma).astype(np.float64)
    original = img.pixels.astype(np.float64)
    blended = cfg.weight_original * original + cfg.weight_blurred * blurred + cfg.gamma_offset
    out = _apply_mask(_to_uint8(blended), mask)
    return PreparedImage(pixels=out, mask_radius=img.mask_radius, image_id=img.image_id)


def preprocess_image(img: RawImage, cfg: PrepConfig, image_id: Optional[str] = None) -> PreparedImage:
    cropped = crop_blank_margins(img, cfg.blank_threshold)
    prepared = contrast_blend(circularize(cropped, cfg), cfg)
    if image_id is not None:
        prepared = prepared.model_copy(update={"image_id": image_id})
    return prepared


def preprocess_batch(images: Sequence[RawImage], cfg: PrepConfig, workers: int = 1) -> List[PreparedImage]:
    """Preprocess many images; output order always matches input order."""
    if workers <= 1:
        return [preprocess_image(img, cfg) for img in images]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda img: preprocess_image(img, cfg), images))


# ----------------- Image I/O ------------------

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def load_image(path: Union[str, Path]) -> RawImage:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8).copy()


def save_image(path: Union[str, Path], img: Union[RawImage, PreparedImage]) -> None:
    pixels = img.pixels if isinstance(img, PreparedImage) else img
    if pixels.ndim == 3 and pixels.shape[2] == 1:
        pixels = pixels[:, :, 0]
    Image.fromarray(pixels).save(path, format="PNG")
