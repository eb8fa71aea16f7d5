"""Classifier construction and checkpoint round-trip.

The model is a 50-layer residual backbone whose 1000-way head is
replaced by a 6-output linear layer; all layers stay trainable. A
checkpoint is the torch state_dict blob plus a mandatory JSON sidecar
``<blob>.json`` carrying format version, label order, config and
metadata.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torchvision import models

from .errors import CheckpointError, InitializationError
from .labels import LABEL_ORDER, N_CLASSES

CHECKPOINT_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class ClassifierConfig:
    backbone: str = "residual_50"
    num_outputs: int = N_CLASSES
    pretrained_init: bool = True
    input_side: int = 224

    def __post_init__(self):
        if self.backbone != "residual_50":
            raise ValueError(f"unsupported backbone {self.backbone!r}")
        if self.num_outputs != N_CLASSES:
            raise ValueError(f"num_outputs is fixed at {N_CLASSES}")
        if self.input_side != 224:
            raise ValueError("input_side is fixed at 224")


def _init_head(head: nn.Linear) -> None:
    # Fan-in scaled uniform weights, zero bias: initial probabilities sit
    # near 0.5 instead of inheriting the 1000-way head statistics.
    bound = 1.0 / math.sqrt(head.in_features)
    nn.init.uniform_(head.weight, -bound, bound)
    nn.init.zeros_(head.bias)


def build_classifier(cfg: ClassifierConfig = ClassifierConfig(), seed=None) -> nn.Module:
    """Build the 6-output classifier.

    With pretrained_init the backbone must be obtainable (cached file or
    download); failure raises InitializationError rather than silently
    training from scratch. A seed makes from-scratch initialization
    reproducible.
    """
    ctx = torch.random.fork_rng() if seed is not None else nullcontext()
    with ctx:
        if seed is not None:
            torch.manual_seed(seed)
        if cfg.pretrained_init:
            try:
                backbone = models.resnet50(weights=models.ResNet50_Weights.IMAGENET1K_V1)
            except Exception as exc:
                raise InitializationError(
                    f"pretrained backbone weights unavailable: {exc}"
                ) from exc
        else:
            backbone = models.resnet50(weights=None)
        backbone.fc = nn.Linear(backbone.fc.in_features, cfg.num_outputs)
        _init_head(backbone.fc)
    return backbone


def _check_batch(batch, input_side: int) -> np.ndarray:
    arr = np.asarray(batch, dtype=np.float32)
    expected = (input_side, input_side, 3)
    if arr.ndim != 4 or arr.shape[1:] != expected:
        raise ValueError(f"expected (B, {input_side}, {input_side}, 3) batch, got {arr.shape}")
    if arr.size == 0:
        raise ValueError("empty batch")
    if arr.min() < -1.0 - 1e-5 or arr.max() > 1.0 + 1e-5:
        raise ValueError("batch values must lie in [-1, 1]")
    return arr


def forward(model: nn.Module, batch, input_side: int = 224) -> np.ndarray:
    """Eval-mode forward pass: (B, side, side, 3) in [-1, 1] -> (B, 6) logits."""
    arr = _check_batch(batch, input_side)
    x = torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))
    model.eval()
    with torch.no_grad():
        logits = model(x)
    return logits.numpy()


def probabilities(logits) -> np.ndarray:
    """Elementwise logistic; multi-label outputs, no sum-to-one constraint."""
    z = np.asarray(logits, dtype=np.float64)
    out = np.empty_like(z)
    np.negative(np.abs(z), out=out)
    np.exp(out, out=out)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + out[pos])
    out[~pos] = out[~pos] / (1.0 + out[~pos])
    return out


def _sidecar_path(path) -> str:
    return os.fspath(path) + ".json"


def file_digest(path, prefix: int = 12) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:prefix]


def save_checkpoint(model: nn.Module, path, config: ClassifierConfig, metadata: dict) -> str:
    """Write the weights blob and its JSON sidecar; returns the blob path."""
    path = os.fspath(path)
    torch.save(model.state_dict(), path)
    sidecar = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "label_order": list(LABEL_ORDER),
        "config": dataclasses.asdict(config),
        "metadata": {**metadata, "weights_sha256": file_digest(path, prefix=64)},
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return path


def load_checkpoint(path):
    """Load a checkpoint; returns (model, sidecar dict).

    The sidecar's format version and label order are part of the
    contract: a mismatch is a CheckpointError, as is a corrupt blob.
    The blob supplies all weights, so no pretrained download happens
    here regardless of the stored config.
    """
    path = os.fspath(path)
    try:
        with open(_sidecar_path(path), encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError as exc:
        raise CheckpointError(f"missing checkpoint sidecar {_sidecar_path(path)}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"unreadable checkpoint sidecar: {exc}") from exc

    found = sidecar.get("format_version")
    if found != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format: expected {CHECKPOINT_FORMAT_VERSION!r}, found {found!r}"
        )
    if sidecar.get("label_order") != list(LABEL_ORDER):
        raise CheckpointError(
            f"checkpoint label order {sidecar.get('label_order')} does not match {list(LABEL_ORDER)}"
        )
    try:
        cfg_fields = dict(sidecar["config"])
        cfg_fields["pretrained_init"] = False
        cfg = ClassifierConfig(**cfg_fields)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad checkpoint config: {exc}") from exc

    model = build_classifier(cfg)
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state, strict=True)
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"corrupted checkpoint blob {path}: {exc}") from exc
    model.eval()
    sidecar["model_version"] = file_digest(path)
    return model, sidecar
