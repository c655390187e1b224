#!/usr/bin/env python3
import numpy as np
import pytest
from scipy import signal

from drgrade.errors import EmptyImage, ValidationError
from drgrade.imageprep import (PrepConfig, PreparedImage, circle_mask, circularize, contrast_blend,
                               crop_blank_margins, gaussian_blur, load_image, masked_gaussian_blur,
                               preprocess_batch, preprocess_image, resize_bilinear, save_image)


def _gaussian_2d(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3 * sigma))
    y, x = np.mgrid[-radius:radius + 1, -radius:radius + 1].astype(np.float64)
    kernel = np.exp(-(x ** 2 + y ** 2) / (2 * sigma ** 2))
    return kernel / kernel.sum()


def _direct_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    kernel = _gaussian_2d(sigma)
    radius = kernel.shape[0] // 2
    padded = np.pad(img.astype(np.float64), radius, mode="symmetric")
    return signal.convolve2d(padded, kernel, mode="valid")


def _disk(size: int, value: int) -> PreparedImage:
    pixels = np.where(circle_mask(size), value, 0).astype(np.uint8)
    return PreparedImage(pixels=pixels, mask_radius=size / 2)


# ----------------- Crop ------------------

def test_crop_removes_blank_margins():
    img = np.zeros((20, 30), dtype=np.uint8)
    img[5:12, 8:25] = 200
    cropped = crop_blank_margins(img)
    assert cropped.shape == (7, 17)
    assert (cropped == 200).all()


def test_crop_threshold_is_strict():
    img = np.full((10, 10), 7, dtype=np.uint8)
    img[3, 4] = 8
    assert crop_blank_margins(img, threshold=7).shape == (1, 1)


def test_crop_uses_max_channel():
    img = np.zeros((10, 10, 3), dtype=np.uint8)
    img[2:4, 6:9, 2] = 90
    assert crop_blank_margins(img).shape == (2, 3, 3)


def test_crop_all_blank_raises():
    with pytest.raises(EmptyImage):
        crop_blank_margins(np.full((16, 16), 7, dtype=np.uint8))


# ----------------- Circularize ------------------

def test_circularize_output_shape_and_corners():
    rng = np.random.default_rng(0)
    img = rng.integers(1, 256, size=(50, 70, 3), dtype=np.uint8)
    prepared = circularize(img, PrepConfig(target_size=64))
    assert prepared.pixels.shape == (64, 64, 3)
    assert prepared.mask_radius == 32
    for r, c in [(0, 0), (0, 63), (63, 0), (63, 63)]:
        assert (prepared.pixels[r, c] == 0).all()
    assert (prepared.pixels[32, 32] > 0).all()


def test_circularize_all_zero_raises():
    with pytest.raises(EmptyImage):
        circularize(np.zeros((8, 8), dtype=np.uint8), PrepConfig(target_size=32))


def test_circle_mask_uses_pixel_centers():
    mask = circle_mask(32)
    assert mask[16, 0] and mask[0, 16]
    assert not mask[0, 0]
    np.testing.assert_array_equal(mask, mask.T)
    np.testing.assert_array_equal(mask, mask[::-1, ::-1])


def test_resize_constant_stays_constant():
    img = np.full((13, 29), 77, dtype=np.uint8)
    assert (resize_bilinear(img, 40) == 77).all()


def test_target_size_must_be_even():
    with pytest.raises(Exception):
        PrepConfig(target_size=63)


# ----------------- Blur / blend ------------------

@pytest.mark.parametrize("sigma, size", [(2.0, 40), (20.0, 128)])
def test_gaussian_blur_matches_direct_convolution(sigma, size):
    rng = np.random.default_rng(7)
    img = rng.integers(0, 256, size=(size, size), dtype=np.uint8)
    expected = _direct_blur(img, sigma)
    actual = gaussian_blur(img, sigma).astype(np.float64)
    assert np.abs(actual - expected).max() <= 1.0


def test_impulse_response_is_symmetric():
    img = np.zeros((41, 41), dtype=np.uint8)
    img[20, 20] = 255
    out = gaussian_blur(img, 2.0)
    np.testing.assert_array_equal(out, out.T)
    np.testing.assert_array_equal(out, out[::-1, :])
    assert out[20, 20] == out.max()
    assert np.abs(out.astype(np.float64) - _direct_blur(img, 2.0)).max() <= 1.0


def test_blur_rejects_non_positive_sigma():
    with pytest.raises(ValidationError):
        gaussian_blur(np.zeros((4, 4), dtype=np.uint8), 0.0)


def test_masked_blur_of_constant_disk_is_constant():
    disk = _disk(64, 150)
    out = masked_gaussian_blur(disk.pixels, circle_mask(64), 20.0)
    assert (out[circle_mask(64)] == 150).all()
    assert (out[~circle_mask(64)] == 0).all()


@pytest.mark.parametrize("value", [1, 100, 255])
def test_contrast_blend_constant_disk_gives_128(value):
    out = contrast_blend(_disk(64, value), PrepConfig(target_size=64))
    mask = circle_mask(64)
    assert (out.pixels[mask] == 128).all()
    assert (out.pixels[~mask] == 0).all()


def test_contrast_blend_matches_pixel_formula():
    rng = np.random.default_rng(3)
    mask = circle_mask(64)
    pixels = np.where(mask, rng.integers(0, 256, size=(64, 64)), 0).astype(np.uint8)
    cfg = PrepConfig(target_size=64, blur_sigma=2.0)
    out = contrast_blend(PreparedImage(pixels=pixels, mask_radius=32), cfg)

    blurred = masked_gaussian_blur(pixels, mask, 2.0).astype(np.int64)
    expected = np.clip(4 * pixels.astype(np.int64) - 4 * blurred + 128, 0, 255)
    expected[~mask] = 0
    np.testing.assert_array_equal(out.pixels, expected.astype(np.uint8))


# ----------------- Whole stage ------------------

def _fundus(size: int = 80) -> np.ndarray:
    rng = np.random.default_rng(11)
    img = np.zeros((size, size + 20, 3), dtype=np.uint8)
    yy, xx = np.mgrid[:size, :size + 20]
    inside = (yy - size / 2) ** 2 + (xx - (size + 20) / 2) ** 2 < (size / 2 - 4) ** 2
    img[inside] = rng.integers(40, 220, size=(int(inside.sum()), 3))
    return img


def test_constant_disk_preprocesses_to_uniform_128():
    img = (circle_mask(300) * 200).astype(np.uint8)
    out = preprocess_image(img, PrepConfig(target_size=64, blur_sigma=20.0))
    mask = circle_mask(64)
    assert (out.pixels[mask] == 128).all()
    assert (out.pixels[~mask] == 0).all()


def test_off_centre_color_disk_preprocesses_to_uniform_128():
    yy, xx = np.mgrid[:200, :260]
    disk = (yy - 90) ** 2 + (xx - 120) ** 2 < 80 ** 2
    img = np.zeros((200, 260, 3), dtype=np.uint8)
    img[disk] = (200, 120, 60)
    out = preprocess_image(img, PrepConfig(target_size=64, blur_sigma=4.0))
    mask = circle_mask(64)
    assert (out.pixels[mask] == 128).all()
    assert (out.pixels[~mask] == 0).all()


def test_circularize_rim_takes_disk_values():
    yy, xx = np.mgrid[:101, :101]
    img = np.where((yy - 50) ** 2 + (xx - 50) ** 2 <= 50 ** 2, 90, 0).astype(np.uint8)
    prepared = circularize(img, PrepConfig(target_size=48))
    mask = circle_mask(48)
    assert (prepared.pixels[mask] == 90).all()
    assert (prepared.pixels[~mask] == 0).all()


def test_preprocess_image_is_deterministic():
    cfg = PrepConfig(target_size=64, blur_sigma=4.0)
    a = preprocess_image(_fundus(), cfg, image_id="10_left")
    b = preprocess_image(_fundus(), cfg)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    assert a.image_id == "10_left"
    assert a.pixels.shape == (64, 64, 3)


def test_preprocess_batch_keeps_order():
    cfg = PrepConfig(target_size=32, blur_sigma=2.0)
    images = [_fundus(60), np.full((30, 30), 200, dtype=np.uint8), _fundus(90)]
    serial = preprocess_batch(images, cfg, workers=1)
    parallel = preprocess_batch(images, cfg, workers=3)
    for s, p in zip(serial, parallel):
        np.testing.assert_array_equal(s.pixels, p.pixels)
    assert serial[1].pixels.ndim == 2


def test_png_round_trip(tmp_path):
    prepared = preprocess_image(_fundus(), PrepConfig(target_size=32, blur_sigma=2.0))
    save_image(tmp_path / "out.png", prepared)
    np.testing.assert_array_equal(load_image(tmp_path / "out.png"), prepared.pixels)
