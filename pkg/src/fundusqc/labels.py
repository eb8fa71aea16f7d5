"""Canonical artifact label definitions shared by every other module.

The six artifact classes form the unit of ground truth and prediction.
Their order is fixed; manifests, checkpoints, reports and the service
all index classes by this order.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

LABEL_ORDER = (
    "eyelash_present",
    "lower_eyelid_obstructing",
    "upper_eyelid_obstructing",
    "image_too_dark",
    "dark_artifact",
    "image_not_centered",
)

N_CLASSES = len(LABEL_ORDER)

# Human-readable names for banners and rendered reports.
DISPLAY_NAMES = {
    "eyelash_present": "Eyelash Present",
    "lower_eyelid_obstructing": "Lower Eyelid Obstructing",
    "upper_eyelid_obstructing": "Upper Eyelid Obstructing",
    "image_too_dark": "Image Too Dark",
    "dark_artifact": "Dark Artifact",
    "image_not_centered": "Image Not Centered",
}

# Classes whose presence alone warrants immediate re-acquisition. The two
# remaining classes (eyelash_present, dark_artifact) only downgrade an image
# to "acceptable with warnings".
RETAKE_CLASSES = frozenset(
    {
        "upper_eyelid_obstructing",
        "lower_eyelid_obstructing",
        "image_too_dark",
        "image_not_centered",
    }
)


@dataclass(frozen=True)
class ArtifactLabels:
    """Six boolean artifact flags in canonical order."""

    eyelash_present: bool = False
    lower_eyelid_obstructing: bool = False
    upper_eyelid_obstructing: bool = False
    image_too_dark: bool = False
    dark_artifact: bool = False
    image_not_centered: bool = False

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (bool, np.bool_)):
                raise TypeError(f"label {f.name!r} must be bool, got {type(v).__name__}")

    def to_vector(self) -> np.ndarray:
        """Return the labels as a 6-element 0/1 integer vector."""
        return np.array([int(getattr(self, name)) for name in LABEL_ORDER], dtype=np.int64)

    @classmethod
    def from_vector(cls, vec) -> "ArtifactLabels":
        """Build from any 6-element sequence of 0/1 (or bool) values."""
        arr = np.asarray(vec)
        if arr.shape != (N_CLASSES,):
            raise ValueError(f"expected a 6-element vector, got shape {arr.shape}")
        vals = {}
        for i, name in enumerate(LABEL_ORDER):
            v = arr[i]
            if v not in (0, 1, True, False):
                raise ValueError(f"label value for {name!r} must be 0 or 1, got {v!r}")
            vals[name] = bool(v)
        return cls(**vals)

    def flagged(self) -> list:
        """Names of the positive classes, in canonical order."""
        return [name for name in LABEL_ORDER if getattr(self, name)]


def labels_to_matrix(labels_list) -> np.ndarray:
    """Stack a sequence of ArtifactLabels into an (n, 6) 0/1 array."""
    if len(labels_list) == 0:
        return np.zeros((0, N_CLASSES), dtype=np.int64)
    return np.stack([lab.to_vector() for lab in labels_list])
