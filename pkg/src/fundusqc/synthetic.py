"""Procedural fundus-like images with injected, exactly-labeled artifacts.

The generator is deliberately cartoonish: an orange-red disc on black
with an optic-disc blob and vessel arcs. Each artifact injector makes a
strong, geometrically verifiable change and records a witness in the
injection parameter log, so ground truth is exact by construction.

Injectors compose in a fixed order: decentering first (it moves the
disc, and later injectors need the moved geometry), global darkening
last (it scales everything already painted). In between: eyelash,
upper eyelid, lower eyelid, dark artifact.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

from .errors import DataError
from .labels import LABEL_ORDER, N_CLASSES, ArtifactLabels
from .manifest import DatasetManifest, ImageRecord, save_manifest

# Prevalences proportional to per-class positive counts observed in a
# 243-image clinical grading: (232, 41, 200, 83, 204, 99).
DEFAULT_PREVALENCE = (232 / 243, 41 / 243, 200 / 243, 83 / 243, 204 / 243, 99 / 243)

DISC_RADIUS_FRAC = 0.46
MIN_DECENTER_FRAC = 0.12
MIN_EYELID_COVERAGE = 0.08
DARKEN_RANGE = (0.25, 0.5)

INJECTOR_ORDER = (
    "image_not_centered",
    "eyelash_present",
    "upper_eyelid_obstructing",
    "lower_eyelid_obstructing",
    "dark_artifact",
    "image_too_dark",
)


@dataclass(frozen=True)
class SynthConfig:
    n_images: int
    prevalence: tuple = DEFAULT_PREVALENCE
    image_side: int = 448
    seed: int = 0

    def __post_init__(self):
        if self.n_images < 0:
            raise ValueError("n_images must be >= 0")
        if len(self.prevalence) != N_CLASSES:
            raise ValueError(f"need {N_CLASSES} prevalences")
        if any(not 0.0 <= p <= 1.0 for p in self.prevalence):
            raise ValueError("prevalences must lie in [0, 1]")
        if self.image_side < 64:
            raise ValueError("image_side must be >= 64")


# ---------------------------------------------------------------------------
# base fundus
# ---------------------------------------------------------------------------

def _disc_mask(side, center, radius):
    yy, xx = np.ogrid[:side, :side]
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius ** 2


def generate_base_fundus(seed, side: int = 448) -> np.ndarray:
    """Deterministic synthetic fundus: (side, side, 3) uint8.

    Orange-red disc on a black surround, a brighter optic-disc blob and
    a handful of vessel arcs; mild texture noise.
    """
    rng = np.random.default_rng(seed)
    center = (side / 2.0, side / 2.0)
    radius = DISC_RADIUS_FRAC * side

    im = Image.new("RGB", (side, side), (0, 0, 0))
    draw = ImageDraw.Draw(im)
    base = (
        int(rng.integers(185, 220)),
        int(rng.integers(75, 105)),
        int(rng.integers(30, 50)),
    )
    draw.ellipse(
        [center[1] - radius, center[0] - radius, center[1] + radius, center[0] + radius],
        fill=base,
    )

    # Optic disc: bright blob offset from center, kept inside the disc.
    od_angle = rng.uniform(0, 2 * math.pi)
    od_dist = rng.uniform(0.14, 0.22) * side
    od_r = rng.uniform(0.055, 0.075) * side
    od_cy = center[0] + od_dist * math.sin(od_angle)
    od_cx = center[1] + od_dist * math.cos(od_angle)
    draw.ellipse(
        [od_cx - od_r, od_cy - od_r, od_cx + od_r, od_cy + od_r],
        fill=(235, 195, 120),
    )

    # Vessels: polyline arcs radiating from the optic disc.
    n_vessels = int(rng.integers(6, 11))
    for _ in range(n_vessels):
        ang = rng.uniform(0, 2 * math.pi)
        bend = rng.uniform(-0.6, 0.6)
        pts = []
        for t in np.linspace(0.0, 1.0, 12):
            dist = t * rng.uniform(0.55, 0.8) * radius
            a = ang + bend * t
            y = od_cy + dist * math.sin(a)
            x = od_cx + dist * math.cos(a)
            pts.append((x, y))
        draw.line(pts, fill=(120, 32, 26), width=max(2, side // 150))

    arr = np.asarray(im).astype(np.float32)

    # Radial shading toward the rim plus light texture noise.
    yy, xx = np.ogrid[:side, :side]
    d2 = ((yy - center[0]) ** 2 + (xx - center[1]) ** 2) / radius ** 2
    shade = np.clip(1.0 - 0.22 * np.minimum(d2, 1.0), 0.0, 1.0)
    mask = _disc_mask(side, center, radius)
    arr *= np.where(mask, shade, 1.0)[..., None]
    arr += rng.normal(0.0, 2.5, size=arr.shape) * mask[..., None]
    return np.clip(arr, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# injectors: image -> (image, witness)
# ---------------------------------------------------------------------------

def _luminance(arr) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float32)
    return 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]


def inject_not_centered(image, params, rng=None):
    """Shift the whole frame so the disc centroid moves off-center.

    params: dx_frac, dy_frac (fractions of the side); the displacement
    magnitude must be >= 12% of the side.
    """
    arr = np.asarray(image)
    side = arr.shape[0]
    dx, dy = float(params["dx_frac"]), float(params["dy_frac"])
    mag = math.hypot(dx, dy)
    if mag < MIN_DECENTER_FRAC:
        raise ValueError(
            f"decentering displacement {mag:.3f} below the {MIN_DECENTER_FRAC} minimum"
        )
    px, py = int(round(dx * side)), int(round(dy * side))
    out = np.zeros_like(arr)
    src_y = slice(max(0, -py), min(side, side - py))
    src_x = slice(max(0, -px), min(side, side - px))
    dst_y = slice(max(0, py), min(side, side + py))
    dst_x = slice(max(0, px), min(side, side + px))
    out[dst_y, dst_x] = arr[src_y, src_x]
    witness = {"dx_frac": dx, "dy_frac": dy, "displacement_frac": mag}
    return out, witness


def inject_eyelash(image, params, rng):
    """Dark tapered filaments entering from the top edge."""
    arr = np.asarray(image)
    side = arr.shape[0]
    n = int(params["n_filaments"])
    if not 1 <= n <= 16:
        raise ValueError(f"n_filaments must be in [1, 16], got {n}")
    overlay = Image.new("L", (side, side), 0)
    draw = ImageDraw.Draw(overlay)
    filaments = []
    for _ in range(n):
        x0 = rng.uniform(0.1, 0.9) * side
        length = rng.uniform(0.3, 0.55) * side
        drift = rng.uniform(-0.35, 0.35) * length
        bow = rng.uniform(-0.12, 0.12) * length
        width0 = max(3, int(round(side * rng.uniform(0.008, 0.014))))
        steps = 14
        for s in range(steps):
            t0, t1 = s / steps, (s + 1) / steps
            xa = x0 + drift * t0 + bow * math.sin(math.pi * t0)
            xb = x0 + drift * t1 + bow * math.sin(math.pi * t1)
            w = max(1, int(round(width0 * (1.0 - 0.75 * t1))))
            draw.line([(xa, length * t0), (xb, length * t1)], fill=255, width=w)
        filaments.append({"x0_frac": x0 / side, "length_frac": length / side,
                          "width_px": width0})
    alpha = np.asarray(overlay.filter(ImageFilter.GaussianBlur(side / 400)),
                       dtype=np.float32) / 255.0
    alpha *= 0.92
    lash_color = np.array([24, 14, 12], dtype=np.float32)
    out = arr.astype(np.float32) * (1 - alpha[..., None]) + lash_color * alpha[..., None]
    witness = {"n_filaments": n, "filaments": filaments}
    return np.clip(out, 0, 255).astype(np.uint8), witness


def _eyelid_crescent(image, params, rng, top: bool):
    arr = np.asarray(image)
    side = arr.shape[0]
    coverage = float(params["coverage_frac"])
    if not MIN_EYELID_COVERAGE <= coverage <= 0.40:
        raise ValueError(
            f"coverage_frac must lie in [{MIN_EYELID_COVERAGE}, 0.40], got {coverage}"
        )
    disc_cy, disc_cx = params["disc_center"]
    disc_r = float(params["disc_radius"])
    disc = _disc_mask(side, (disc_cy, disc_cx), disc_r)
    disc_area = int(disc.sum())

    # The lid is a huge ellipse whose rim dips into the frame; binary
    # search its depth until the requested share of the disc is covered.
    ell_w = 1.8 * side
    ell_h = 1.2 * side
    lo, hi = 0.0, 0.75 * side
    mask_img = None
    measured = 0.0
    for _ in range(12):
        depth = 0.5 * (lo + hi)
        mask_img = Image.new("L", (side, side), 0)
        d = ImageDraw.Draw(mask_img)
        if top:
            box = [side / 2 - ell_w / 2, depth - ell_h, side / 2 + ell_w / 2, depth]
        else:
            box = [side / 2 - ell_w / 2, side - depth,
                   side / 2 + ell_w / 2, side - depth + ell_h]
        d.ellipse(box, fill=255)
        m = np.asarray(mask_img) > 0
        measured = (m & disc).sum() / max(disc_area, 1)
        if measured < coverage:
            lo = depth
        else:
            hi = depth
    alpha = np.asarray(mask_img.filter(ImageFilter.GaussianBlur(side / 45)),
                       dtype=np.float32) / 255.0
    lid_color = np.array([38, 20, 16], dtype=np.float32)
    out = arr.astype(np.float32) * (1 - alpha[..., None]) + lid_color * alpha[..., None]
    witness = {
        "coverage_frac_requested": coverage,
        "coverage_frac_measured": float(measured),
        "side": "top" if top else "bottom",
    }
    return np.clip(out, 0, 255).astype(np.uint8), witness


def inject_upper_eyelid(image, params, rng=None):
    """Dark crescent occluding the top periphery (>= 8% of disc area)."""
    return _eyelid_crescent(image, params, rng, top=True)


def inject_lower_eyelid(image, params, rng=None):
    """Dark crescent occluding the bottom periphery (>= 8% of disc area)."""
    return _eyelid_crescent(image, params, rng, top=False)


def inject_dark_artifact(image, params, rng=None):
    """Soft dark blobs strictly inside the disc.

    params: blobs = list of (cy_frac, cx_frac, r_frac, depth) with image
    coordinates as fractions of the side; every blob circle must lie
    entirely within the disc.
    """
    arr = np.asarray(image)
    side = arr.shape[0]
    disc_cy, disc_cx = params["disc_center"]
    disc_r = float(params["disc_radius"])
    blobs = params["blobs"]
    if len(blobs) < 1:
        raise ValueError("need at least one blob")
    yy, xx = np.mgrid[:side, :side]
    dark = np.zeros((side, side), dtype=np.float32)
    for cy_f, cx_f, r_f, depth in blobs:
        cy, cx, r = cy_f * side, cx_f * side, r_f * side
        if not 0.3 <= depth <= 0.9:
            raise ValueError(f"blob depth must lie in [0.3, 0.9], got {depth}")
        dist_to_center = math.hypot(cy - disc_cy, cx - disc_cx)
        if dist_to_center + r >= disc_r:
            raise ValueError("blob must lie strictly inside the disc")
        d2 = ((yy - cy) ** 2 + (xx - cx) ** 2) / r ** 2
        dark = np.maximum(dark, depth * np.exp(-1.5 * d2))
    out = arr.astype(np.float32) * (1 - dark[..., None])
    witness = {"blobs": [list(map(float, b)) for b in blobs]}
    return np.clip(out, 0, 255).astype(np.uint8), witness


def inject_too_dark(image, params, rng=None):
    """Global luminance scale by a factor in [0.25, 0.5]."""
    factor = float(params["factor"])
    if not DARKEN_RANGE[0] <= factor <= DARKEN_RANGE[1]:
        raise ValueError(f"darken factor must lie in {list(DARKEN_RANGE)}, got {factor}")
    arr = np.asarray(image).astype(np.float32) * factor
    return np.clip(arr, 0, 255).astype(np.uint8), {"factor": factor}


INJECTORS = {
    "image_not_centered": inject_not_centered,
    "eyelash_present": inject_eyelash,
    "upper_eyelid_obstructing": inject_upper_eyelid,
    "lower_eyelid_obstructing": inject_lower_eyelid,
    "dark_artifact": inject_dark_artifact,
    "image_too_dark": inject_too_dark,
}


# ---------------------------------------------------------------------------
# record-level generation
# ---------------------------------------------------------------------------

def _sample_params(name, rng, side, disc_center, disc_radius):
    if name == "image_not_centered":
        mag = rng.uniform(MIN_DECENTER_FRAC + 0.01, 0.26)
        ang = rng.uniform(0, 2 * math.pi)
        return {"dx_frac": mag * math.cos(ang), "dy_frac": mag * math.sin(ang)}
    if name == "eyelash_present":
        return {"n_filaments": int(rng.integers(4, 9))}
    if name in ("upper_eyelid_obstructing", "lower_eyelid_obstructing"):
        return {
            "coverage_frac": float(rng.uniform(0.10, 0.30)),
            "disc_center": disc_center,
            "disc_radius": disc_radius,
        }
    if name == "dark_artifact":
        n_blobs = int(rng.integers(1, 4))
        blobs = []
        for _ in range(n_blobs):
            r_f = rng.uniform(0.055, 0.11)
            max_off = disc_radius / side - r_f - 0.01
            off = rng.uniform(0.0, max(max_off, 0.0))
            ang = rng.uniform(0, 2 * math.pi)
            blobs.append((
                disc_center[0] / side + off * math.sin(ang),
                disc_center[1] / side + off * math.cos(ang),
                r_f,
                float(rng.uniform(0.6, 0.85)),
            ))
        return {"blobs": blobs, "disc_center": disc_center, "disc_radius": disc_radius}
    if name == "image_too_dark":
        return {"factor": float(rng.uniform(*DARKEN_RANGE))}
    raise KeyError(name)


def generate_record(cfg: SynthConfig, index: int):
    """One synthetic image: returns (uint8 image, ArtifactLabels, param log)."""
    rng = np.random.default_rng([cfg.seed, index])
    flags = {
        name: bool(rng.random() < cfg.prevalence[i])
        for i, name in enumerate(LABEL_ORDER)
    }
    side = cfg.image_side
    img = generate_base_fundus([cfg.seed, index, 1], side=side)
    disc_center = (side / 2.0, side / 2.0)
    disc_radius = DISC_RADIUS_FRAC * side
    log = {}
    for name in INJECTOR_ORDER:
        if not flags[name]:
            continue
        params = _sample_params(name, rng, side, disc_center, disc_radius)
        img, witness = INJECTORS[name](img, params, rng)
        log[name] = witness
        if name == "image_not_centered":
            disc_center = (
                disc_center[0] + params["dy_frac"] * side,
                disc_center[1] + params["dx_frac"] * side,
            )
    return img, ArtifactLabels(**flags), log


def generate_dataset(cfg: SynthConfig, out_dir) -> DatasetManifest:
    """Write n_images PNGs, per-image injection logs and a manifest CSV.

    Labels are exact by construction. Deterministic per config: the same
    cfg yields byte-identical images and manifest.
    """
    out_dir = os.fspath(out_dir)
    img_dir = os.path.join(out_dir, "images")
    created = []
    try:
        os.makedirs(img_dir, exist_ok=True)
        records = []
        for i in range(cfg.n_images):
            img, labels, log = generate_record(cfg, i)
            rec_id = f"synth_{i:05d}"
            png_path = os.path.join(img_dir, rec_id + ".png")
            Image.fromarray(img).save(png_path)
            created.append(png_path)
            side_path = os.path.join(img_dir, rec_id + ".json")
            with open(side_path, "w", encoding="utf-8") as fh:
                json.dump({"labels": labels.to_vector().tolist(), "injections": log},
                          fh, indent=2, sort_keys=True)
                fh.write("\n")
            created.append(side_path)
            records.append(ImageRecord(id=rec_id, image_path=png_path, labels=labels))
        manifest = DatasetManifest(records=records)
        manifest_path = os.path.join(out_dir, "manifest.csv")
        save_manifest(manifest, manifest_path)
        created.append(manifest_path)
        return manifest
    except OSError as exc:
        for path in created:
            try:
                os.unlink(path)
            except OSError:
                pass
        raise DataError(f"synthetic generation failed, partial output removed: {exc}") from exc
