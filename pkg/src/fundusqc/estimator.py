"""Scikit-learn style wrapper around the training core.

ArtifactClassifier follows the estimator protocol (get_params/set_params,
fit returns self, trailing-underscore attributes after fit) over
preprocessed image arrays: X is (n, 224, 224, 3) in [-1, 1], y is (n, 6)
0/1. Record-level workflows live in pipeline.py.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .augment import AugmentConfig
from .evaluation import threshold_predictions
from .labels import LABEL_ORDER, N_CLASSES
from .network import ClassifierConfig, build_classifier, forward, probabilities
from .splitting import _round_half_up, stratified_group_assign
from .training import TrainConfig, fit_arrays

HOLDOUT_FRAC = 0.1


def _check_images(X):
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim != 4 or arr.shape[1:] != (224, 224, 3):
        raise ValueError(f"X must be (n, 224, 224, 3), got shape {arr.shape}")
    return arr


def _check_labels(y, n):
    arr = np.asarray(y)
    if arr.ndim != 2 or arr.shape != (n, N_CLASSES):
        raise ValueError(f"y must be ({n}, {N_CLASSES}), got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("y must contain only 0/1")
    return arr.astype(np.int64)


def carve_holdout(y, seed, frac: float = HOLDOUT_FRAC):
    """Stratified (fit_idx, holdout_idx) split for early-stopping signal."""
    n = len(y)
    n_hold = max(1, _round_half_up(frac * n))
    if n_hold >= n:
        raise ValueError(f"cannot carve a {frac:.0%} holdout out of {n} records")
    groups = stratified_group_assign(y, [n - n_hold, n_hold], seed)
    return np.flatnonzero(groups == 0), np.flatnonzero(groups == 1)


class ArtifactClassifier(BaseEstimator, ClassifierMixin):
    """Six-label artifact classifier with the fixed training recipe.

    Parameters mirror TrainConfig plus the decision threshold and
    backbone initialization mode. When fit is called without an explicit
    validation set, a stratified 10% holdout is carved out of (X, y) to
    drive early stopping.
    """

    def __init__(self, lr0=5e-3, lr_decay_factor=0.9, lr_decay_every=10,
                 momentum=0.9, max_epochs=500, patience=5, batch_size=16,
                 pos_weights="auto", threshold=0.5, pretrained_init=True,
                 augment_config=AugmentConfig(), random_state=0):
        self.lr0 = lr0
        self.lr_decay_factor = lr_decay_factor
        self.lr_decay_every = lr_decay_every
        self.momentum = momentum
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.pos_weights = pos_weights
        self.threshold = threshold
        self.pretrained_init = pretrained_init
        self.augment_config = augment_config
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            lr0=self.lr0,
            lr_decay_factor=self.lr_decay_factor,
            lr_decay_every=self.lr_decay_every,
            momentum=self.momentum,
            max_epochs=self.max_epochs,
            patience=self.patience,
            batch_size=self.batch_size,
            seed=self.random_state,
            pos_weights=self.pos_weights,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        X = _check_images(X)
        y = _check_labels(y, len(X))
        cfg = self._train_config()
        if (X_val is None) != (y_val is None):
            raise ValueError("pass X_val and y_val together or neither")
        if X_val is None:
            fit_idx, hold_idx = carve_holdout(y, cfg.seed)
            X_tr, y_tr = X[fit_idx], y[fit_idx]
            X_val, y_val = X[hold_idx], y[hold_idx]
        else:
            X_tr, y_tr = X, y
            X_val = _check_images(X_val)
            y_val = _check_labels(y_val, len(X_val))

        model = build_classifier(
            ClassifierConfig(pretrained_init=self.pretrained_init),
            seed=cfg.seed,
        )
        result = fit_arrays(model, X_tr, y_tr, X_val, y_val, cfg,
                            augment_cfg=self.augment_config)
        self.model_ = model
        self.fit_result_ = result
        self.stats_ = result.stats
        self.label_names_ = list(LABEL_ORDER)
        self.classes_ = [np.array([0, 1])] * N_CLASSES
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this ArtifactClassifier is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        """Per-class artifact probabilities, shape (n, 6)."""
        self._require_fitted()
        X = _check_images(X)
        out = []
        step = max(1, int(self.batch_size))
        for start in range(0, len(X), step):
            out.append(probabilities(forward(self.model_, X[start:start + step])))
        return np.concatenate(out, axis=0)

    def predict(self, X) -> np.ndarray:
        """0/1 flags at the configured threshold, shape (n, 6)."""
        return threshold_predictions(self.predict_proba(X), self.threshold)

    def score(self, X, y) -> float:
        """Macro accuracy: per-class accuracy averaged over the 6 classes."""
        y = _check_labels(y, len(np.asarray(X)))
        preds = self.predict(X)
        return float((preds == y).mean(axis=0).mean())
