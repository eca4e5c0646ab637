"""8-bit PNG boundary: loading, square fitting, area resampling, saving.

Inside the package images are float64 arrays in [0, 1] of shape (H, W, 3).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .losses import area_matrix


def to_float(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.shape[2] == 4:
        arr = arr[:, :, :3]
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return np.clip(arr.astype(np.float64), 0.0, 1.0)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return to_float(np.asarray(im.convert("RGB")))


def write_png(path: str | Path, img: np.ndarray) -> None:
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def center_crop(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    return img[top : top + s, left : left + s]


def letterbox(img: np.ndarray, fill=(1.0, 1.0, 1.0)) -> np.ndarray:
    h, w = img.shape[:2]
    s = max(h, w)
    out = np.empty((s, s, 3))
    out[:] = fill
    top, left = (s - h) // 2, (s - w) // 2
    out[top : top + h, left : left + w] = img
    return out


def resize_area(img: np.ndarray, height: int, width: int | None = None) -> np.ndarray:
    """Exact area-average resampling (each output pixel is a box mean)."""
    width = height if width is None else width
    Ay = area_matrix(img.shape[0], height)
    Ax = area_matrix(img.shape[1], width)
    return np.einsum("ai,ijc,bj->abc", Ay, img, Ax, optimize=True)


def prepare_reference(img: np.ndarray, resolution: int, use_letterbox: bool = False) -> np.ndarray:
    square = letterbox(img) if use_letterbox else center_crop(img)
    return resize_area(square, resolution)
