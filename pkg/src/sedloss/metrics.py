"""Frame-based evaluation: thresholded prediction, F-scores, ROC-AUC.

Micro metrics pool every (frame, class) cell of the evaluated clips;
macro metrics average per-class values.  Per-class F defaults to 0 for
classes with no true positives, false positives, or false negatives,
and such classes stay in the macro mean — rare classes that are never
predicted therefore drag the macro F-score down rather than vanishing
from it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class EvalConfig:
    threshold: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.threshold <= 1.0):
            raise ValidationError(f"threshold must lie in [0,1], got {self.threshold}")


@dataclass
class ConfusionCounts:
    tp: np.ndarray  # per class
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def pooled(self) -> tuple[int, int, int, int]:
        return (int(self.tp.sum()), int(self.fp.sum()), int(self.fn.sum()), int(self.tn.sum()))


@dataclass
class MetricsReport:
    micro_f: float
    macro_f: float
    micro_auc: float
    macro_auc: float
    per_class_f: np.ndarray
    confusion: ConfusionCounts


def _stack(grids) -> np.ndarray:
    if isinstance(grids, np.ndarray):
        if grids.ndim == 2:
            return grids
        if grids.ndim == 3:
            return grids.reshape(-1, grids.shape[-1])
        raise ValidationError(f"expected 2-d or 3-d array, got shape {grids.shape}")
    arrs = [np.asarray(g) for g in grids]
    if not arrs:
        raise ValidationError("no grids to evaluate")
    m = arrs[0].shape[1]
    for a in arrs:
        if a.ndim != 2 or a.shape[1] != m:
            raise ValidationError("all grids must be 2-d and share the class dimension")
    return np.concatenate(arrs, axis=0)


def predict_labels(y: np.ndarray, threshold: float) -> np.ndarray:
    """Binarize scores; the threshold itself counts as active (>=)."""
    if not (0.0 <= threshold <= 1.0):
        raise ValidationError(f"threshold must lie in [0,1], got {threshold}")
    return (np.asarray(y) >= threshold).astype(np.int8)


def confusion_counts(pred, z) -> ConfusionCounts:
    p = _stack(pred)
    t = _stack(z)
    if p.shape != t.shape:
        raise ValidationError(f"prediction/label shape mismatch: {p.shape} vs {t.shape}")
    p = p.astype(bool)
    t = t.astype(bool)
    return ConfusionCounts(
        tp=(p & t).sum(axis=0).astype(np.int64),
        fp=(p & ~t).sum(axis=0).astype(np.int64),
        fn=(~p & t).sum(axis=0).astype(np.int64),
        tn=(~p & ~t).sum(axis=0).astype(np.int64),
    )


def _f1(tp, fp, fn) -> float:
    den = 2 * tp + fp + fn
    return 2 * tp / den if den > 0 else 0.0


def fscores(pred, z) -> tuple[float, float, np.ndarray]:
    """(micro F, macro F, per-class F) from binary predictions."""
    conf = confusion_counts(pred, z)
    per_class = np.array(
        [_f1(conf.tp[j], conf.fp[j], conf.fn[j]) for j in range(len(conf.tp))]
    )
    tp, fp, fn, _ = conf.pooled
    return _f1(tp, fp, fn), float(per_class.mean()), per_class


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their group's average rank."""
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    starts = np.flatnonzero(np.r_[True, sx[1:] != sx[:-1]])
    ends = np.r_[starts[1:], len(sx)]
    group_rank = (starts + ends + 1) / 2.0  # mean of 1-based ranks in each tie group
    ranks_sorted = np.repeat(group_rank, ends - starts)
    ranks = np.empty(len(x))
    ranks[order] = ranks_sorted
    return ranks


def _binary_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-sum AUC, ties counted one half."""
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc(y, z, mode: str) -> float:
    """Micro (pooled) or macro (class-averaged) ROC-AUC.

    Macro skips classes lacking positives or negatives; if no class
    qualifies, that is an error rather than a silent default.
    """
    scores = _stack(y).astype(np.float64)
    labels = _stack(z).astype(np.int64)
    if scores.shape != labels.shape:
        raise ValidationError(f"score/label shape mismatch: {scores.shape} vs {labels.shape}")
    if mode == "micro":
        return _binary_auc(scores.ravel(), labels.ravel())
    if mode == "macro":
        per_class = []
        for j in range(scores.shape[1]):
            col = labels[:, j]
            if 0 < col.sum() < len(col):
                per_class.append(_binary_auc(scores[:, j], col))
        if not per_class:
            raise ValidationError("macro AUC undefined: no class has both positives and negatives")
        return float(np.mean(per_class))
    raise ValidationError(f"AUC mode must be 'micro' or 'macro', got {mode!r}")


def evaluate(y, z, cfg: EvalConfig = EvalConfig()) -> MetricsReport:
    """Full frame-based report: F-scores at the threshold plus AUCs."""
    scores = _stack(y)
    labels = _stack(z)
    pred = predict_labels(scores, cfg.threshold)
    micro_f, macro_f, per_class_f = fscores(pred, labels)
    return MetricsReport(
        micro_f=micro_f,
        macro_f=macro_f,
        micro_auc=roc_auc(scores, labels, "micro"),
        macro_auc=roc_auc(scores, labels, "macro"),
        per_class_f=per_class_f,
        confusion=confusion_counts(pred, labels),
    )


REPORT_BASE_COLUMNS = ["method", "params", "micro_f", "macro_f", "micro_auc", "macro_auc"]


def write_report_csv(path, rows, class_names) -> None:
    """One CSV row per (method/experiment, seed) with per-class F columns.

    ``rows`` is a sequence of (method, params, MetricsReport).
    """
    header = REPORT_BASE_COLUMNS + [f"f_{name}" for name in class_names]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for method, params, report in rows:
            writer.writerow(
                [method, params, repr(report.micro_f), repr(report.macro_f),
                 repr(report.micro_auc), repr(report.macro_auc)]
                + [repr(float(v)) for v in report.per_class_f]
            )
