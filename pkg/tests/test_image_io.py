import logging

import numpy as np
import pytest
from PIL import Image as PILImage

from filterfit.errors import DimensionMismatchError, FormatError
from filterfit.image import (
    coord_grid,
    load_image,
    quantize_roundtrip,
    resize_long_edge,
    save_image,
)


def _write_png(path, pixels, mode="RGB"):
    PILImage.fromarray(pixels, mode=mode).save(path, format="PNG")


@pytest.mark.parametrize("rgb,expected", [
    ((255, 255, 255), (1.0, 1.0, 1.0)),
    ((0, 0, 0), (0.0, 0.0, 0.0)),
    ((128, 64, 32), (128 / 255, 64 / 255, 32 / 255)),
])
def test_load_normalization(tmp_path, rgb, expected):
    path = tmp_path / "px.png"
    _write_png(path, np.array([[rgb]], dtype=np.uint8))
    img = load_image(path)
    assert img.shape == (1, 1, 3)
    assert tuple(img[0, 0]) == expected


@pytest.mark.parametrize("value,byte", [
    (1.0, 255),
    (-0.2, 0),     # clamp below
    (1.7, 255),    # clamp above
    (0.5, 128),    # round-half-away-from-zero: round(127.5) = 128
])
def test_save_quantization(tmp_path, value, byte):
    path = tmp_path / "q.png"
    save_image(np.full((1, 1, 3), value), path)
    assert np.asarray(PILImage.open(path))[0, 0, 0] == byte


def test_roundtrip_identity_on_grid(tmp_path):
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (17, 23, 3)).astype(np.float64) / 255.0
    path = tmp_path / "rt.png"
    save_image(img, path)
    assert np.array_equal(load_image(path), img)
    assert np.array_equal(quantize_roundtrip(img), img)


def test_alpha_dropped_with_warning(tmp_path, caplog):
    path = tmp_path / "rgba.png"
    pixels = np.zeros((2, 2, 4), dtype=np.uint8)
    pixels[..., 0] = 200
    pixels[..., 3] = 40
    _write_png(path, pixels, mode="RGBA")
    with caplog.at_level(logging.WARNING):
        img = load_image(path)
    assert img.shape == (2, 2, 3)
    assert img[0, 0, 0] == 200 / 255
    assert any("alpha" in r.message for r in caplog.records)


def test_load_rejects_non_png(tmp_path):
    path = tmp_path / "img.jpg"
    PILImage.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(path, format="JPEG")
    with pytest.raises(FormatError):
        load_image(path)


def test_load_rejects_16bit(tmp_path):
    path = tmp_path / "deep.png"
    PILImage.new("I;16", (2, 2)).save(path, format="PNG")
    with pytest.raises(FormatError):
        load_image(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_image(tmp_path / "nope.png")


def test_save_rejects_bad_shape(tmp_path):
    with pytest.raises(DimensionMismatchError):
        save_image(np.zeros((4, 4)), tmp_path / "bad.png")


def test_coord_grid_corners():
    x, y = coord_grid(7, 5)
    assert (x[0, 0], y[0, 0]) == (0.0, 0.0)
    assert (x[0, -1], y[0, -1]) == (1.0, 0.0)
    assert (x[-1, 0], y[-1, 0]) == (0.0, 1.0)
    assert (x[-1, -1], y[-1, -1]) == (1.0, 1.0)


def test_coord_grid_degenerate_axis():
    x, y = coord_grid(1, 4)
    assert np.all(x == 0.0)
    assert y[-1, 0] == 1.0


def test_resize_long_edge():
    img = np.zeros((40, 80, 3))
    out = resize_long_edge(img, 20)
    assert out.shape == (10, 20, 3)
    assert np.array_equal(resize_long_edge(img, 80), img)
