"""Image raster conventions and 8-bit PNG I/O.

An image is a float64 numpy array of shape (H, W, 3) with RGB values in
nominal range [0, 1], row-major. All internal arithmetic stays in float64;
8-bit quantization happens only at the PNG boundary.
"""

import logging
from functools import lru_cache

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import DimensionMismatchError, FormatError

log = logging.getLogger(__name__)


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check the (H, W, 3) convention and return the array as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionMismatchError(
            f"{name}: expected shape (H, W, 3), got {arr.shape}"
        )
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatchError(f"{name}: empty raster {arr.shape}")
    return arr


def require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"shape mismatch: {a.shape} vs {b.shape}"
        )


@lru_cache(maxsize=64)
def coord_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized pixel-center coordinates (x, y), each of shape (H, W).

    x = col / (width - 1) and y = row / (height - 1), so corners map exactly
    to (0,0), (1,0), (0,1), (1,1). A 1-pixel-wide/tall axis maps to 0.
    Returned arrays are cached and read-only.
    """
    xs = np.linspace(0.0, 1.0, width) if width > 1 else np.zeros(1)
    ys = np.linspace(0.0, 1.0, height) if height > 1 else np.zeros(1)
    x, y = np.meshgrid(xs, ys)
    x.setflags(write=False)
    y.setflags(write=False)
    return x, y


def load_image(path) -> np.ndarray:
    """Load an 8-bit RGB/RGBA PNG as float64 values k/255.

    Alpha channels are dropped with a warning. Non-PNG files and unsupported
    modes (palette, 16-bit, grayscale) raise FormatError; missing or
    unreadable files raise OSError.
    """
    try:
        with PILImage.open(path) as im:
            if im.format != "PNG":
                raise FormatError(f"{path}: not a PNG file (got {im.format})")
            if im.mode == "RGBA":
                log.warning("%s: dropping alpha channel", path)
                im = im.convert("RGB")
            elif im.mode != "RGB":
                raise FormatError(
                    f"{path}: unsupported PNG mode {im.mode!r}, need 8-bit RGB/RGBA"
                )
            data = np.asarray(im, dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a recognized image file") from exc
    return data / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Write an image as 8-bit RGB PNG.

    Values are clamped to [0, 1] and quantized with round-half-away-from-zero:
    byte = floor(clamp(v) * 255 + 0.5).
    """
    arr = validate_image(img)
    clamped = np.clip(arr, 0.0, 1.0)
    quantized = np.floor(clamped * 255.0 + 0.5).astype(np.uint8)
    PILImage.fromarray(quantized, mode="RGB").save(path, format="PNG")


def quantize_roundtrip(img: np.ndarray) -> np.ndarray:
    """The values an image will carry after a PNG save/load round trip."""
    arr = validate_image(img)
    return np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5) / 255.0


def resize_long_edge(img: np.ndarray, long_edge: int) -> np.ndarray:
    """Resize so the longer side equals `long_edge` (Lanczos, deterministic)."""
    arr = validate_image(img)
    h, w = arr.shape[:2]
    scale = long_edge / max(h, w)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    if (new_w, new_h) == (w, h):
        return arr
    im = PILImage.fromarray(
        np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8), mode="RGB"
    )
    im = im.resize((new_w, new_h), resample=PILImage.LANCZOS)
    return np.asarray(im, dtype=np.float64) / 255.0
