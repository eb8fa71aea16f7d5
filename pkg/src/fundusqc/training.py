"""Optimization core: weighted BCE, the SGD schedule, early stopping and
the epoch loop.

The loop is split in two layers. ``fit_loop`` orchestrates epochs,
learning-rate schedule, early stopping and best-state capture through
three callables, so the stopping behaviour can be exercised with stubbed
losses. ``fit_arrays`` supplies the real callables: augmented minibatch
SGD over an in-memory dataset.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .augment import AugmentConfig, augment
from .errors import ConfigError, TrainingAborted
from .labels import N_CLASSES

log = logging.getLogger(__name__)

WEIGHT_CLAMP = (0.1, 100.0)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 5e-3
    lr_decay_factor: float = 0.9
    lr_decay_every: int = 10      # epochs between decay steps
    momentum: float = 0.9
    max_epochs: int = 500
    patience: int = 5
    batch_size: int = 16
    seed: int = 0
    pos_weights: object = "auto"  # "auto" or a sequence of 6 positive reals

    def __post_init__(self):
        positive = {
            "lr0": self.lr0,
            "lr_decay_factor": self.lr_decay_factor,
            "lr_decay_every": self.lr_decay_every,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "batch_size": self.batch_size,
        }
        for name, v in positive.items():
            if not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if not self.momentum >= 0:
            raise ConfigError(f"momentum must be >= 0, got {self.momentum}")
        if not self.patience < self.max_epochs:
            raise ConfigError(
                f"patience ({self.patience}) must be smaller than max_epochs ({self.max_epochs})"
            )
        if not isinstance(self.pos_weights, str):
            w = np.asarray(self.pos_weights, dtype=np.float64)
            if w.shape != (N_CLASSES,) or not (w > 0).all():
                raise ConfigError("pos_weights must be 'auto' or 6 positive reals")
        elif self.pos_weights != "auto":
            raise ConfigError(f"unknown pos_weights mode {self.pos_weights!r}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    per_class_val_accuracy: list


def lr_at_epoch(epoch: int, lr0: float = 5e-3, decay_factor: float = 0.9,
                decay_every: int = 10) -> float:
    """Step-decay schedule: lr0 * decay_factor ** floor(epoch / decay_every)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return lr0 * decay_factor ** (epoch // decay_every)


def class_pos_weights(y) -> np.ndarray:
    """Per-class positive weights negatives/positives from training labels.

    Degenerate classes (no positives or no negatives) are clamped into
    [0.1, 100] with a warning instead of producing inf or 0.
    """
    mat = np.asarray(y, dtype=np.int64)
    if mat.ndim != 2 or mat.shape[1] != N_CLASSES:
        raise ValueError(f"expected (n, {N_CLASSES}) labels, got shape {mat.shape}")
    n = mat.shape[0]
    pos = mat.sum(axis=0).astype(np.float64)
    neg = n - pos
    weights = np.empty(N_CLASSES, dtype=np.float64)
    lo, hi = WEIGHT_CLAMP
    for c in range(N_CLASSES):
        if pos[c] == 0 or neg[c] == 0:
            weights[c] = hi if pos[c] == 0 else lo
            log.warning(
                "class %d has %d positives / %d negatives; weight clamped to %g",
                c, int(pos[c]), int(neg[c]), weights[c],
            )
        else:
            weights[c] = np.clip(neg[c] / pos[c], lo, hi)
    return weights


def _softplus(x):
    # max(x, 0) + log1p(exp(-|x|)): finite for any |x| a float can hold.
    return torch.relu(x) + torch.log1p(torch.exp(-torch.abs(x)))


def weighted_bce(logits, targets, weights):
    """Mean weighted binary cross entropy over batch and classes.

    Elementwise -[w*y*log(sigmoid(z)) + (1-y)*log(1-sigmoid(z))] in the
    numerically stable logit form (1-y)*z + (w*y + 1 - y)*softplus(-z).
    """
    z = torch.as_tensor(logits)
    y = torch.as_tensor(targets, dtype=z.dtype)
    w = torch.as_tensor(weights, dtype=z.dtype)
    if z.shape != y.shape:
        raise ValueError(f"logits shape {tuple(z.shape)} != targets shape {tuple(y.shape)}")
    bad = (y != 0) & (y != 1)
    if bool(bad.any()):
        raise ValueError("targets must be 0 or 1")
    if bool((torch.as_tensor(weights) <= 0).any()):
        raise ValueError("weights must be positive")
    per_elem = (1 - y) * z + (w * y + 1 - y) * _softplus(-z)
    return per_elem.mean()


def sgd_momentum_step(params, grads, velocities, lr: float, momentum: float):
    """Classical heavy-ball update: v <- momentum*v + g; p <- p - lr*v.

    Updates tensors in place and returns (params, velocities). Raises on
    non-finite gradients; the training loop adds epoch/batch context.
    """
    with torch.no_grad():
        for p, g, v in zip(params, grads, velocities):
            if not bool(torch.isfinite(g).all()):
                raise ValueError(
                    f"non-finite gradient (max |g| = {float(g.abs().max()):g})"
                )
            v.mul_(momentum).add_(g)
            p.sub_(lr * v)
    return params, velocities


class EarlyStopping:
    """Stop after `patience` consecutive epochs without improvement.

    Improvement means the loss fell below the running best by more than
    `tol` (strict comparison against best - tol).
    """

    def __init__(self, patience: int, tol: float = 1e-6):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.tol = tol
        self.best_loss = math.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float):
        """Record one epoch; returns (improved, should_stop)."""
        if val_loss < self.best_loss - self.tol:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True, False
        self.bad_epochs += 1
        return False, self.bad_epochs >= self.patience


@dataclass
class FitResult:
    best_state: object
    stats: list
    best_epoch: int
    best_val_loss: float
    epoch_stopped: int          # last epoch actually run
    stopped_early: bool = False


def fit_loop(train_epoch, validate, snapshot, cfg: TrainConfig) -> FitResult:
    """Run the epoch loop with scheduled lr and patience-based stopping.

    train_epoch(epoch, lr) -> train_loss
    validate(epoch) -> (val_loss, per_class_accuracy)
    snapshot() -> opaque copy of the current (best) model state
    """
    stopper = EarlyStopping(cfg.patience)
    stats = []
    best_state = None
    stopped_early = False
    epoch = -1
    for epoch in range(cfg.max_epochs):
        lr = lr_at_epoch(epoch, cfg.lr0, cfg.lr_decay_factor, cfg.lr_decay_every)
        train_loss = float(train_epoch(epoch, lr))
        val_loss, per_class_acc = validate(epoch)
        val_loss = float(val_loss)
        if not math.isfinite(train_loss) or not math.isfinite(val_loss):
            raise TrainingAborted(
                f"non-finite loss at epoch {epoch} (train={train_loss}, val={val_loss})",
                epoch=epoch,
            )
        stats.append(EpochStats(epoch, train_loss, val_loss, lr, list(per_class_acc)))
        improved, stop = stopper.update(epoch, val_loss)
        if improved:
            best_state = snapshot()
        if stop:
            stopped_early = True
            break
    return FitResult(
        best_state=best_state,
        stats=stats,
        best_epoch=stopper.best_epoch,
        best_val_loss=stopper.best_loss,
        epoch_stopped=epoch,
        stopped_early=stopped_early,
    )


def _resolve_pos_weights(cfg: TrainConfig, y_train) -> np.ndarray:
    if isinstance(cfg.pos_weights, str):
        return class_pos_weights(y_train)
    return np.asarray(cfg.pos_weights, dtype=np.float64)


def _to_batch_tensor(images) -> torch.Tensor:
    arr = np.ascontiguousarray(np.transpose(images, (0, 3, 1, 2)))
    return torch.from_numpy(arr)


def fit_arrays(model, X_train, y_train, X_val, y_val, cfg: TrainConfig,
               augment_cfg: AugmentConfig = AugmentConfig()) -> FitResult:
    """Train a model on preprocessed in-memory arrays.

    X arrays are (n, side, side, 3) floats in [-1, 1]; y arrays are
    (n, 6) 0/1. Augmentation (when a config is given) applies to the
    training split only, keyed per (seed, epoch, record_index). The
    returned FitResult carries the best-validation-loss state_dict.
    """
    X_train = np.asarray(X_train, dtype=np.float32)
    X_val = np.asarray(X_val, dtype=np.float32)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if len(X_train) == 0 or len(X_val) == 0:
        raise ValueError("training and validation splits must be non-empty")
    if len(X_train) != len(y_train) or len(X_val) != len(y_val):
        raise ValueError("image/label counts differ")

    weights_np = _resolve_pos_weights(cfg, y_train)
    weights = torch.from_numpy(weights_np)
    y_train_t = torch.from_numpy(y_train)
    y_val_t = torch.from_numpy(y_val)
    params = [p for p in model.parameters() if p.requires_grad]
    velocities = [torch.zeros_like(p) for p in params]
    n = len(X_train)

    def train_epoch(epoch, lr):
        model.train()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if augment_cfg is not None:
                batch = np.stack(
                    [augment(X_train[i], augment_cfg, (cfg.seed, epoch, int(i))) for i in idx]
                )
            else:
                batch = X_train[idx]
            xb = _to_batch_tensor(batch)
            yb = y_train_t[idx]
            model.zero_grad(set_to_none=True)
            logits = model(xb)
            loss = weighted_bce(logits, yb.to(logits.dtype), weights.to(logits.dtype))
            if not bool(torch.isfinite(loss)):
                raise TrainingAborted(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}",
                    epoch=epoch, batch=start // cfg.batch_size,
                )
            loss.backward()
            grads = [p.grad for p in params]
            try:
                sgd_momentum_step(params, grads, velocities, lr, cfg.momentum)
            except ValueError as exc:
                max_abs = max(float(g.abs().max()) for g in grads if g is not None)
                raise TrainingAborted(
                    f"aborted at epoch {epoch}, batch {start // cfg.batch_size}: {exc}",
                    epoch=epoch, batch=start // cfg.batch_size, max_abs_grad=max_abs,
                ) from exc
            total += float(loss) * len(idx)
        return total / n

    def validate(epoch):
        model.eval()
        losses = 0.0
        correct = np.zeros(N_CLASSES, dtype=np.int64)
        with torch.no_grad():
            for start in range(0, len(X_val), cfg.batch_size):
                xb = _to_batch_tensor(X_val[start:start + cfg.batch_size])
                yb = y_val_t[start:start + cfg.batch_size]
                logits = model(xb)
                loss = weighted_bce(logits, yb.to(logits.dtype), weights.to(logits.dtype))
                losses += float(loss) * len(xb)
                preds = (torch.sigmoid(logits) >= 0.5).long()
                correct += (preds == yb).sum(dim=0).numpy()
        return losses / len(X_val), (correct / len(X_val)).tolist()

    def snapshot():
        return {k: v.detach().clone() for k, v in model.state_dict().items()}

    result = fit_loop(train_epoch, validate, snapshot, cfg)
    if result.best_state is not None:
        model.load_state_dict(result.best_state)
    return result
