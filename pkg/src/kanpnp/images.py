"""8-bit image I/O and area-averaging resize."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, UnsupportedFormatError

# PIL modes that hold 8 bits per sample
_EIGHT_BIT = {"L", "RGB", "RGBA", "P", "LA"}


def load_image(path) -> np.ndarray:
    """Read an 8-bit image as float64 ``[H, W, C]`` in ``[0, 1]`` (C is 1 or 3).

    Alpha channels are dropped and palette images expanded to RGB. Anything
    with more than 8 bits per sample raises :class:`UnsupportedFormatError`.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode not in _EIGHT_BIT:
                raise UnsupportedFormatError(f"{path}: pixel mode {mode!r} is not 8-bit gray or RGB")
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a readable image") from exc
    if arr.ndim == 2:
        arr = arr[..., None]
    elif arr.shape[2] in (2, 4):
        arr = arr[..., :-1]
    return arr.astype(np.float64) / 255.0


def to_uint8(img) -> np.ndarray:
    return np.round(255.0 * np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)).astype(np.uint8)


def save_image(img, path) -> Path:
    """Write ``round(255 * clip(img))`` as an 8-bit PNG."""
    path = Path(path)
    arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise ConfigurationError(f"cannot save array of shape {np.shape(img)} as an image")
    Image.fromarray(to_uint8(arr)).save(path, format="PNG")
    return path


def resize_area(img, width: int, height: int) -> np.ndarray:
    """Area-averaging (box filter) resize of a float image, per channel."""
    img = np.asarray(img, dtype=np.float64)
    if width < 1 or height < 1:
        raise ConfigurationError(f"target size must be positive, got {width}x{height}")
    if img.shape[1] == width and img.shape[0] == height:
        return img.copy()
    chans = [np.asarray(Image.fromarray(img[..., c].astype(np.float32))
                        .resize((width, height), Image.BOX), dtype=np.float64)
             for c in range(img.shape[2])]
    return np.stack(chans, axis=-1)


def crop_divisible(img, factor: int) -> np.ndarray:
    """Drop trailing rows/columns so both sides are multiples of ``factor``."""
    h = img.shape[0] - img.shape[0] % factor
    w = img.shape[1] - img.shape[1] % factor
    if h == 0 or w == 0:
        raise ConfigurationError(f"image {img.shape[:2]} is smaller than factor {factor}")
    return img[:h, :w]
