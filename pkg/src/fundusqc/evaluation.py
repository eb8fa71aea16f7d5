"""Thresholding, per-class confusion counts, metrics and report rendering.

Metric conventions
------------------
accuracy    = (tp + tn) / n
precision   = tp / (tp + fp)
recall      = tp / (tp + fn)        (identical to sensitivity)
specificity = tn / (tn + fp)

Any metric with a zero denominator is undefined rather than coerced to
zero: it is carried as None, excluded from macro averages and counted in
``undefined_counts``. With 41-positive classes and 49-image test splits
empty cells do occur, and silent zeros would skew the macro numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .labels import LABEL_ORDER, N_CLASSES

METRIC_NAMES = ("accuracy", "precision", "recall", "specificity")

REPORT_SCHEMA = "eval/1"


def threshold_predictions(probs, tau: float = 0.5) -> np.ndarray:
    """Binarize probabilities; exact ties count as positive.

    Accepts a single 6-vector or an (n, 6) matrix and preserves shape.
    """
    p = np.asarray(probs, dtype=np.float64)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return (p >= tau).astype(np.int64)


@dataclass(frozen=True)
class BinaryConfusion:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _as_label_matrix(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected (n, n_classes) labels, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return arr.astype(np.int64)


def confusion(preds, truth, class_index: int) -> BinaryConfusion:
    """2x2 counts for one class over aligned prediction/truth lists."""
    p = _as_label_matrix(preds)
    t = _as_label_matrix(truth)
    if p.shape != t.shape:
        raise ValueError(f"prediction/truth shapes differ: {p.shape} vs {t.shape}")
    if p.shape[0] < 1:
        raise ValueError("need at least one evaluated image")
    pc = p[:, class_index]
    tc = t[:, class_index]
    return BinaryConfusion(
        tp=int(((pc == 1) & (tc == 1)).sum()),
        fp=int(((pc == 1) & (tc == 0)).sum()),
        tn=int(((pc == 0) & (tc == 0)).sum()),
        fn=int(((pc == 0) & (tc == 1)).sum()),
    )


@dataclass(frozen=True)
class ClassMetrics:
    """The four independent metrics; None marks an undefined value."""

    accuracy: float = None
    precision: float = None
    recall: float = None
    specificity: float = None

    @property
    def sensitivity(self):
        # Sensitivity and recall are the same quantity; reported twice
        # under both names, computed once.
        return self.recall

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _ratio(num: int, den: int):
    return num / den if den > 0 else None


def metrics(c: BinaryConfusion) -> ClassMetrics:
    if c.n < 1:
        raise ValueError("empty confusion")
    return ClassMetrics(
        accuracy=_ratio(c.tp + c.tn, c.n),
        precision=_ratio(c.tp, c.tp + c.fp),
        recall=_ratio(c.tp, c.tp + c.fn),
        specificity=_ratio(c.tn, c.tn + c.fp),
    )


def macro_average(per_class) -> ClassMetrics:
    """Unweighted mean over classes, skipping undefined values.

    A metric undefined for every class stays undefined.
    """
    out = {}
    for name in METRIC_NAMES:
        vals = [getattr(m, name) for m in per_class if getattr(m, name) is not None]
        out[name] = sum(vals) / len(vals) if vals else None
    return ClassMetrics(**out)


def undefined_counts(per_class) -> dict:
    return {
        name: sum(1 for m in per_class if getattr(m, name) is None)
        for name in METRIC_NAMES
    }


@dataclass
class EvalReport:
    confusions: dict           # class name -> BinaryConfusion
    per_class: dict            # class name -> ClassMetrics
    macro: ClassMetrics
    threshold: float
    model_version: str = ""
    dataset_digest: str = ""
    undefined: dict = field(default_factory=dict)


def evaluate_predictions(probs, truth, threshold: float = 0.5,
                         model_version: str = "", dataset_digest: str = "") -> EvalReport:
    """Full report from raw probabilities and ground-truth labels."""
    preds = threshold_predictions(probs, threshold)
    confs = {name: confusion(preds, truth, i) for i, name in enumerate(LABEL_ORDER)}
    per_class = {name: metrics(confs[name]) for name in LABEL_ORDER}
    ordered = [per_class[name] for name in LABEL_ORDER]
    return EvalReport(
        confusions=confs,
        per_class=per_class,
        macro=macro_average(ordered),
        threshold=threshold,
        model_version=model_version,
        dataset_digest=dataset_digest,
        undefined=undefined_counts(ordered),
    )


def report_to_json(report: EvalReport) -> str:
    classes = {}
    for name in LABEL_ORDER:
        c = report.confusions[name]
        m = report.per_class[name]
        classes[name] = {"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn, **m.as_dict()}
    doc = {
        "schema": REPORT_SCHEMA,
        "threshold": report.threshold,
        "classes": classes,
        "macro": report.macro.as_dict(),
        "undefined_counts": report.undefined,
        "model_version": report.model_version,
        "dataset_digest": report.dataset_digest,
    }
    return json.dumps(doc, indent=2) + "\n"


def report_from_json(text: str) -> EvalReport:
    doc = json.loads(text)
    if doc.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"unsupported report schema {doc.get('schema')!r}")
    confs = {}
    per_class = {}
    for name in LABEL_ORDER:
        cell = doc["classes"][name]
        confs[name] = BinaryConfusion(tp=cell["tp"], fp=cell["fp"], tn=cell["tn"], fn=cell["fn"])
        per_class[name] = ClassMetrics(**{k: cell[k] for k in METRIC_NAMES})
    return EvalReport(
        confusions=confs,
        per_class=per_class,
        macro=ClassMetrics(**doc["macro"]),
        threshold=doc["threshold"],
        model_version=doc["model_version"],
        dataset_digest=doc["dataset_digest"],
        undefined=doc["undefined_counts"],
    )


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def render_report(report: EvalReport, format: str = "text_table") -> str:
    """Render either the JSON document or a per-class text table."""
    if format == "json":
        return report_to_json(report)
    if format != "text_table":
        raise ValueError(f"unknown format {format!r}")
    headers = ["class", "tp", "fp", "tn", "fn"] + list(METRIC_NAMES)
    rows = []
    for name in LABEL_ORDER:
        c = report.confusions[name]
        m = report.per_class[name]
        rows.append([name, str(c.tp), str(c.fp), str(c.tn), str(c.fn)]
                    + [_fmt(getattr(m, k)) for k in METRIC_NAMES])
    rows.append(["macro", "", "", "", ""] + [_fmt(getattr(report.macro, k)) for k in METRIC_NAMES])
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(r))).rstrip())
    lines.append(f"threshold: {report.threshold}")
    if report.model_version:
        lines.append(f"model_version: {report.model_version}")
    if report.dataset_digest:
        lines.append(f"dataset_digest: {report.dataset_digest}")
    return "\n".join(lines) + "\n"


def render_fold_table(matrix, title: str = "Per-class accuracy (percent) by fold") -> str:
    """Text table for a k-fold accuracy matrix (k rows, 6 columns).

    One row per fold plus an overall "mean+/-std" row, one decimal,
    values in percent. Cells for classes with no defined folds render as
    n/a(k=0). NaN entries mark undefined fold values.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != N_CLASSES:
        raise ValueError(f"expected a (k, {N_CLASSES}) matrix, got shape {m.shape}")
    headers = ["fold"] + [name for name in LABEL_ORDER]
    rows = []
    for f in range(m.shape[0]):
        cells = ["n/a" if np.isnan(v) else f"{100 * v:.1f}" for v in m[f]]
        rows.append([str(f + 1)] + cells)
    overall = []
    for c in range(N_CLASSES):
        col = m[:, c]
        col = col[~np.isnan(col)]
        if len(col) == 0:
            overall.append("n/a(k=0)")
        else:
            mean = 100 * col.mean()
            std = 100 * col.std(ddof=1) if len(col) > 1 else 0.0
            overall.append(f"{mean:.1f}+/-{std:.1f}")
    rows.append(["overall"] + overall)
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = [title,
             "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
             "  ".join("-" * w for w in widths)]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(r))).rstrip())
    return "\n".join(lines) + "\n"
