"""Dataset manifest: CSV ingestion, validation and round-trip serialization.

Format: UTF-8 CSV with header
``id,image_path,<six label columns>,split``
where label cells are 0/1 and the split cell is one of train/val/test or
empty for unassigned. Relative image paths are resolved against the
manifest's directory on load.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ManifestError
from .labels import LABEL_ORDER, ArtifactLabels, labels_to_matrix

SPLITS = ("train", "val", "test", "unassigned")

MANIFEST_HEADER = ["id", "image_path"] + list(LABEL_ORDER) + ["split"]


@dataclass
class ImageRecord:
    id: str
    image_path: str
    labels: ArtifactLabels
    split: str = "unassigned"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"record {self.id!r}: invalid split {self.split!r}")


@dataclass
class DatasetManifest:
    records: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise ManifestError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)

    @property
    def n_total(self) -> int:
        return len(self.records)

    @property
    def class_positive_counts(self) -> np.ndarray:
        """Per-class positive counts, recomputed from the records."""
        return self.label_matrix().sum(axis=0)

    def label_matrix(self) -> np.ndarray:
        return labels_to_matrix([r.labels for r in self.records])

    def by_split(self, split: str) -> list:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [r for r in self.records if r.split == split]

    def splits_assigned(self) -> bool:
        return all(r.split != "unassigned" for r in self.records)

    def digest(self) -> str:
        """Stable content hash over ids, paths, labels and splits."""
        h = hashlib.sha256()
        for rec in self.records:
            row = ",".join(
                [rec.id, os.path.basename(rec.image_path)]
                + [str(v) for v in rec.labels.to_vector()]
                + [rec.split]
            )
            h.update(row.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def _parse_label_cell(value, column, line_no):
    v = value.strip()
    if v not in ("0", "1"):
        raise ManifestError(f"line {line_no}: label {column!r} must be 0 or 1, got {value!r}")
    return v == "1"


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest CSV.

    Raises ManifestError naming the offending line for malformed rows,
    duplicate ids or label values outside {0, 1}.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ManifestError(f"manifest not found: {path}")
    base_dir = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError("line 1: missing header") from None
        if [c.strip() for c in header] != MANIFEST_HEADER:
            raise ManifestError(
                f"line 1: bad header, expected {','.join(MANIFEST_HEADER)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ManifestError(
                    f"line {line_no}: expected {len(MANIFEST_HEADER)} cells, got {len(row)}"
                )
            rec_id = row[0].strip()
            if not rec_id:
                raise ManifestError(f"line {line_no}: empty id")
            img = row[1].strip()
            if not img:
                raise ManifestError(f"line {line_no}: empty image_path")
            if not os.path.isabs(img):
                img = os.path.join(base_dir, img)
            flags = {
                name: _parse_label_cell(row[2 + i], name, line_no)
                for i, name in enumerate(LABEL_ORDER)
            }
            split = row[-1].strip() or "unassigned"
            if split not in SPLITS:
                raise ManifestError(f"line {line_no}: invalid split {row[-1]!r}")
            records.append(
                ImageRecord(id=rec_id, image_path=img, labels=ArtifactLabels(**flags), split=split)
            )
    return DatasetManifest(records=records)


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write the manifest CSV; image paths are made relative when possible."""
    path = os.fspath(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for rec in manifest.records:
            img = rec.image_path
            try:
                rel = os.path.relpath(img, base_dir)
            except ValueError:
                rel = img
            if not rel.startswith(".."):
                img = rel
            split = "" if rec.split == "unassigned" else rec.split
            writer.writerow([rec.id, img] + [str(v) for v in rec.labels.to_vector()] + [split])
