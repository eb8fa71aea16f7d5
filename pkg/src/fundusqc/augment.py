"""Training-time augmentation: random affine + horizontal flip.

Randomness is keyed per (seed, epoch, record_index) so the same key always
produces bit-identical output regardless of worker scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class AugmentConfig:
    rotation_deg: float = 15.0     # symmetric: angle ~ U(-r, +r)
    translate_frac: float = 0.10   # symmetric, fraction of the image side
    scale_min: float = 0.9
    scale_max: float = 1.1
    hflip_prob: float = 0.5
    fill_value: float = -1.0       # exposed background, -1 = black

    def __post_init__(self):
        vals = (self.rotation_deg, self.translate_frac, self.scale_min, self.scale_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("augmentation ranges must be finite")
        if self.rotation_deg < 0 or self.translate_frac < 0:
            raise ValueError("rotation_deg and translate_frac must be >= 0")
        if not 0.0 < self.scale_min <= self.scale_max:
            raise ValueError("need 0 < scale_min <= scale_max")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError("hflip_prob must be in [0, 1]")
        if not -1.0 <= self.fill_value <= 1.0:
            raise ValueError("fill_value must be in [-1, 1]")


def draw_params(cfg: AugmentConfig, rng_key) -> dict:
    """Draw one set of augmentation parameters for the given key.

    The draw order is part of the determinism contract: angle, ty, tx,
    scale, flip.
    """
    rng = np.random.default_rng(list(rng_key))
    return {
        "angle_deg": rng.uniform(-cfg.rotation_deg, cfg.rotation_deg),
        "ty": rng.uniform(-cfg.translate_frac, cfg.translate_frac),
        "tx": rng.uniform(-cfg.translate_frac, cfg.translate_frac),
        "scale": rng.uniform(cfg.scale_min, cfg.scale_max),
        "flip": bool(rng.random() < cfg.hflip_prob),
    }


def augment(image, cfg: AugmentConfig, rng_key) -> np.ndarray:
    """Apply the keyed random affine + flip to an HxWx3 array in [-1, 1].

    rng_key is a (seed, epoch, record_index) triple. Identity parameters
    short-circuit so a collapsed config returns the input unchanged.
    """
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected HxWx3 array, got shape {img.shape}")
    p = draw_params(cfg, rng_key)

    out = img
    if p["flip"]:
        out = np.ascontiguousarray(out[:, ::-1, :])

    if p["angle_deg"] != 0.0 or p["ty"] != 0.0 or p["tx"] != 0.0 or p["scale"] != 1.0:
        side = out.shape[0]
        theta = math.radians(p["angle_deg"])
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        # Forward map: p_out = s * R(theta) @ (p_in - c) + c + t.
        # affine_transform wants the inverse: p_in = M @ p_out + offset.
        inv = np.array([[cos_t, -sin_t], [sin_t, cos_t]], dtype=np.float64).T / p["scale"]
        center = np.array([(side - 1) / 2.0, (side - 1) / 2.0])
        shift = np.array([p["ty"] * side, p["tx"] * side])
        matrix = np.eye(3)
        matrix[:2, :2] = inv
        offset = np.zeros(3)
        offset[:2] = center - inv @ (center + shift)
        out = ndimage.affine_transform(
            out,
            matrix=matrix,
            offset=offset,
            order=1,
            mode="constant",
            cval=cfg.fill_value,
        )
        out = np.clip(out, -1.0, 1.0, out=out)
    elif out is img:
        out = img.copy()

    return out.astype(np.float32, copy=False)
