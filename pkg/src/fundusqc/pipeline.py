"""Record-level drivers: train from a manifest, k-fold cross-validation,
final-model training and test-set evaluation.

These load and preprocess images once, then delegate to the array-level
training core.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import metadata as importlib_metadata

import numpy as np

from .augment import AugmentConfig
from .errors import DataError
from .estimator import carve_holdout
from .evaluation import EvalReport, evaluate_predictions, render_fold_table
from .labels import LABEL_ORDER, N_CLASSES
from .manifest import DatasetManifest
from .network import (ClassifierConfig, build_classifier, file_digest, forward,
                      probabilities, save_checkpoint)
from .preprocessing import PreprocessConfig, preprocess_file
from .splitting import kfold_partition
from .training import TrainConfig, FitResult, fit_arrays


def package_version() -> str:
    try:
        return "fundusqc-" + importlib_metadata.version("fundusqc")
    except importlib_metadata.PackageNotFoundError:
        return "fundusqc-unknown"


def config_digest(cfg) -> str:
    doc = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()[:12]


def load_arrays(records, pre_cfg: PreprocessConfig = PreprocessConfig()):
    """Preprocess every record's image; returns (X, y) arrays."""
    if len(records) == 0:
        raise DataError("no records to load")
    X = np.stack([preprocess_file(r.image_path, pre_cfg) for r in records])
    y = np.stack([r.labels.to_vector() for r in records])
    return X, y


def predict_records(model, X, batch_size: int = 16) -> np.ndarray:
    out = []
    for start in range(0, len(X), batch_size):
        out.append(probabilities(forward(model, X[start:start + batch_size])))
    return np.concatenate(out, axis=0)


def fit(model, train_records, val_records, cfg: TrainConfig,
        augment_cfg: AugmentConfig = AugmentConfig(),
        pre_cfg: PreprocessConfig = PreprocessConfig()) -> FitResult:
    """Train on explicit train/val record lists (images loaded here)."""
    ids_train = {r.id for r in train_records}
    if ids_train & {r.id for r in val_records}:
        raise ValueError("train and val records overlap")
    X_tr, y_tr = load_arrays(train_records, pre_cfg)
    X_val, y_val = load_arrays(val_records, pre_cfg)
    return fit_arrays(model, X_tr, y_tr, X_val, y_val, cfg, augment_cfg=augment_cfg)


def fit_final(model, records, cfg: TrainConfig,
              augment_cfg: AugmentConfig = AugmentConfig(),
              pre_cfg: PreprocessConfig = PreprocessConfig()) -> FitResult:
    """Train on all non-test records.

    Early stopping still needs a signal, so a stratified 10% holdout is
    carved out internally; the returned checkpoint is the best-holdout-
    loss state.
    """
    X, y = load_arrays(records, pre_cfg)
    fit_idx, hold_idx = carve_holdout(y, cfg.seed)
    return fit_arrays(model, X[fit_idx], y[fit_idx], X[hold_idx], y[hold_idx],
                      cfg, augment_cfg=augment_cfg)


@dataclass
class CvResult:
    """Per-fold per-class holdout-driver accuracies on a fixed eval set."""

    matrix: np.ndarray          # (k, 6)
    fold_sizes: list
    seed: int
    dataset_digest: str = ""
    eval_digest: str = ""

    @property
    def mean(self) -> np.ndarray:
        return self.matrix.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.matrix.std(axis=0, ddof=1)

    def to_json(self) -> str:
        doc = {
            "schema": "cv/1",
            "k": int(self.matrix.shape[0]),
            "classes": list(LABEL_ORDER),
            "accuracy_matrix": [[round(float(v), 12) for v in row] for row in self.matrix],
            "mean": [round(float(v), 12) for v in self.mean],
            "std": [round(float(v), 12) for v in self.std],
            "fold_sizes": [int(s) for s in self.fold_sizes],
            "seed": self.seed,
            "dataset_digest": self.dataset_digest,
            "eval_digest": self.eval_digest,
        }
        return json.dumps(doc, indent=2) + "\n"

    def render_text(self) -> str:
        return render_fold_table(self.matrix)


def cross_validate(records, cfg: TrainConfig, k: int = 5, eval_records=None,
                   classifier_cfg: ClassifierConfig = None,
                   augment_cfg: AugmentConfig = AugmentConfig(),
                   pre_cfg: PreprocessConfig = PreprocessConfig()) -> CvResult:
    """k-fold driver: each fold trains on k-1 folds with the held-out
    fold as validation, then scores per-class accuracy on the FIXED
    eval_records set.

    Using one fixed external set (rather than each holdout fold) keeps
    fold scores comparable, at the cost of reusing that set across
    folds; callers doing model selection should keep a further untouched
    test split.
    """
    if eval_records is None or len(eval_records) == 0:
        raise ValueError("cross_validate needs a non-empty fixed eval_records set")
    if classifier_cfg is None:
        classifier_cfg = ClassifierConfig(pretrained_init=False)
    records = list(records)
    folds = kfold_partition(records, k=k, seed=cfg.seed)
    X, y = load_arrays(records, pre_cfg)
    X_eval, y_eval = load_arrays(eval_records, pre_cfg)
    matrix = np.zeros((k, N_CLASSES), dtype=np.float64)
    fold_sizes = []
    for f, (fit_idx, hold_idx) in enumerate(folds):
        fold_cfg = dataclasses.replace(cfg, seed=cfg.seed + f)
        model = build_classifier(classifier_cfg, seed=fold_cfg.seed)
        fit_arrays(model, X[fit_idx], y[fit_idx], X[hold_idx], y[hold_idx],
                   fold_cfg, augment_cfg=augment_cfg)
        probs = predict_records(model, X_eval, batch_size=cfg.batch_size)
        preds = (probs >= 0.5).astype(np.int64)
        matrix[f] = (preds == y_eval).mean(axis=0)
        fold_sizes.append(len(hold_idx))
    eval_ids = ",".join(r.id for r in eval_records)
    return CvResult(
        matrix=matrix,
        fold_sizes=fold_sizes,
        seed=cfg.seed,
        dataset_digest=DatasetManifest(records=records).digest(),
        eval_digest=hashlib.sha256(eval_ids.encode()).hexdigest()[:12],
    )


def save_trained(model, out_dir, classifier_cfg: ClassifierConfig,
                 train_cfg: TrainConfig, result: FitResult,
                 dataset_digest: str = "") -> str:
    """Write checkpoint + sidecar, epoch log and run manifest; returns
    the checkpoint path."""
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "model.pt")
    metadata = {
        "created_at": datetime.now(timezone.utc).isoformat(),
        "train_config_digest": config_digest(train_cfg),
        "epoch_stopped": result.epoch_stopped,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "stopped_early": result.stopped_early,
        "dataset_digest": dataset_digest,
        "version": package_version(),
    }
    save_checkpoint(model, ckpt_path, classifier_cfg, metadata)
    with open(os.path.join(out_dir, "epochs.jsonl"), "w", encoding="utf-8") as fh:
        for s in result.stats:
            fh.write(json.dumps({
                "epoch": s.epoch,
                "train_loss": s.train_loss,
                "val_loss": s.val_loss,
                "lr": s.lr,
                "per_class_val_accuracy": s.per_class_val_accuracy,
            }) + "\n")
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as fh:
        json.dump({
            "train_config": dataclasses.asdict(train_cfg),
            "classifier_config": dataclasses.asdict(classifier_cfg),
            "seed": train_cfg.seed,
            "dataset_digest": dataset_digest,
            "version": package_version(),
            "checkpoint_sha256": file_digest(ckpt_path, prefix=64),
        }, fh, indent=2)
        fh.write("\n")
    return ckpt_path


def evaluate_split(model, manifest: DatasetManifest, split: str = "test",
                   threshold: float = 0.5, model_version: str = "",
                   pre_cfg: PreprocessConfig = PreprocessConfig(),
                   batch_size: int = 16) -> EvalReport:
    records = manifest.by_split(split)
    if not records:
        raise DataError(f"manifest has no {split!r} records")
    X, y = load_arrays(records, pre_cfg)
    probs = predict_records(model, X, batch_size=batch_size)
    return evaluate_predictions(probs, y, threshold=threshold,
                                model_version=model_version,
                                dataset_digest=manifest.digest())
