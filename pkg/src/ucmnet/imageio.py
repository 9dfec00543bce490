"""PNG read/write for float images in ``[0, 1]``."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageDecodeError(OSError):
    pass


def read_png(path: str | os.PathLike) -> np.ndarray:
    """Decode to ``[H, W, 3]`` float64 in ``[0, 1]``; alpha is dropped."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                return np.repeat(arr[..., None], 3, axis=2)
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise ImageDecodeError(f"cannot decode {os.fspath(path)}: {e}") from e
    return arr


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: str | os.PathLike, image: np.ndarray) -> None:
    """Write an ``[H, W, 3]`` RGB or ``[H, W]`` grayscale image as 8-bit PNG."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    Image.fromarray(arr).save(path, format="PNG")
