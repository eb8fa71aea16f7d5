"""Stratified dataset splitting for multi-label records.

Pure random splits can starve the rarest class, so both the 7:1:2 split
and the k-fold partition use iterative multi-label stratification:
process labels from rarest to most common, placing each positive record
into the group with the largest remaining desired count for that label.
Ties fall back to the largest remaining group capacity, then to a seeded
uniform draw, which makes the whole assignment deterministic per seed.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import DataError
from .manifest import DatasetManifest

_TIE_TOL = 1e-9


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_sizes(n: int, ratios=(7, 1, 2)):
    """Group sizes for an n-record dataset under the given ratio triple.

    Train and val sizes use round-half-up; the remainder goes to test.
    """
    total = sum(ratios)
    n_train = _round_half_up(n * ratios[0] / total)
    n_val = _round_half_up(n * ratios[1] / total)
    n_test = n - n_train - n_val
    if n_test < 0:
        raise ValueError(f"ratios {ratios} over-allocate {n} records")
    return n_train, n_val, n_test


def stratified_group_assign(label_matrix, group_sizes, seed) -> np.ndarray:
    """Assign each row of an (n, L) 0/1 matrix to one of the groups.

    Returns an int array of group indices with exactly group_sizes[g]
    rows per group.
    """
    y = np.asarray(label_matrix, dtype=np.int64)
    n = y.shape[0]
    n_groups = len(group_sizes)
    if sum(group_sizes) != n:
        raise ValueError("group sizes must sum to the record count")
    rng = np.random.default_rng(seed)
    capacity = np.asarray(group_sizes, dtype=np.int64).copy()
    totals = y.sum(axis=0)
    # Real-valued per-group quota of positives for each label.
    desired = np.outer(group_sizes, totals).astype(np.float64) / max(n, 1)
    assigned = np.full(n, -1, dtype=np.int64)

    def pick_group(label=None):
        eligible = np.flatnonzero(capacity > 0)
        if label is not None:
            score = desired[eligible, label]
            best = score.max()
            eligible = eligible[score >= best - _TIE_TOL]
        cap = capacity[eligible]
        eligible = eligible[cap == cap.max()]
        if len(eligible) == 1:
            return int(eligible[0])
        return int(rng.choice(eligible))

    def place(i, group):
        assigned[i] = group
        capacity[group] -= 1
        desired[group] -= y[i]

    while True:
        remaining = np.flatnonzero(assigned < 0)
        if len(remaining) == 0:
            return assigned
        pos_left = y[remaining].sum(axis=0)
        open_labels = np.flatnonzero(pos_left > 0)
        if len(open_labels) == 0:
            break
        # Rarest open label; index order settles exact ties.
        label = int(open_labels[np.argmin(pos_left[open_labels])])
        todo = [int(i) for i in remaining if y[i, label]]
        rng.shuffle(todo)
        for i in todo:
            place(i, pick_group(label))

    leftovers = [int(i) for i in np.flatnonzero(assigned < 0)]
    rng.shuffle(leftovers)
    for i in leftovers:
        place(i, pick_group())
    return assigned


def split_dataset(manifest: DatasetManifest, ratios=(7, 1, 2), seed: int = 0) -> DatasetManifest:
    """Assign train/val/test splits; returns a new manifest.

    Requires every record unassigned and at least 10 records.
    """
    if any(r.split != "unassigned" for r in manifest.records):
        raise DataError("manifest already has split assignments")
    n = manifest.n_total
    if n < 10:
        raise DataError(f"need at least 10 records to split, got {n}")
    sizes = split_sizes(n, ratios)
    groups = stratified_group_assign(manifest.label_matrix(), sizes, seed)
    names = ("train", "val", "test")
    records = [
        dataclasses.replace(rec, split=names[groups[i]])
        for i, rec in enumerate(manifest.records)
    ]
    return DatasetManifest(records=records)


def kfold_partition(records, k: int = 5, seed: int = 0):
    """Partition record indices into k stratified (fit, holdout) pairs.

    Holdout folds are disjoint, cover all records and differ in size by
    at most one. Indices refer to positions in the given sequence.
    """
    n = len(records)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} available records")
    sizes = [n // k + (1 if g < n % k else 0) for g in range(k)]
    y = np.stack([r.labels.to_vector() for r in records])
    groups = stratified_group_assign(y, sizes, seed)
    folds = []
    for g in range(k):
        holdout = np.flatnonzero(groups == g)
        fit = np.flatnonzero(groups != g)
        folds.append((fit, holdout))
    return folds
