"""Deterministic image preprocessing: bilinear resize + [-1, 1] normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DataError


@dataclass(frozen=True)
class PreprocessConfig:
    target_side: int = 224
    # Cameras in the field emit 4000 px squares; recorded for provenance,
    # any square side is accepted.
    source_side: int = 4000

    def __post_init__(self):
        if self.target_side <= 0:
            raise ValueError("target_side must be positive")
        if self.source_side <= 0:
            raise ValueError("source_side must be positive")


def load_rgb(path) -> np.ndarray:
    """Read an image file as an HxWx3 uint8 array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def preprocess(raw_image, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Resize a square uint8 RGB image and map pixel values to [-1, 1].

    Resampling is bilinear with antialiasing; normalization is the fixed
    affine map pixel/127.5 - 1 applied per channel, so 0 -> -1.0 and
    255 -> +1.0 exactly.
    """
    arr = np.asarray(raw_image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"expected HxWx3 image, got shape {arr.shape}")
    if arr.shape[0] != arr.shape[1]:
        raise DataError(f"expected a square image, got {arr.shape[0]}x{arr.shape[1]}")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.integer) and arr.min() >= 0 and arr.max() <= 255:
            arr = arr.astype(np.uint8)
        else:
            raise DataError(f"expected 8-bit pixels in [0, 255], got dtype {arr.dtype}")
    if arr.shape[0] != cfg.target_side:
        im = Image.fromarray(arr)
        # PIL integrates the filter over the source support, i.e. the resize
        # is antialiased for downscaling.
        im = im.resize((cfg.target_side, cfg.target_side), Image.BILINEAR)
        arr = np.asarray(im)
    out = arr.astype(np.float32) / 127.5 - 1.0
    return out


def preprocess_file(path, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    return preprocess(load_rgb(path), cfg)
