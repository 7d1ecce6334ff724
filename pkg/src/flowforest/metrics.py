"""Confusion-matrix metrics, rank-based ROC AUC, and prediction timing.

The attack class (label 1) is the positive class throughout.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

PRECISION_UNDEFINED = "precision_undefined"
RECALL_UNDEFINED = "recall_undefined"
F1_UNDEFINED = "f1_undefined"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DataError("confusion matrix cells must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class DerivedMetrics:
    """Accuracy, precision, recall, f1 plus zero-denominator markers."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate_flags: frozenset[str] = frozenset()


def confusion(y_true, y_pred) -> ConfusionMatrix:
    """Count TP/FP/FN/TN with attack (1) as the positive class."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DataError("y_true and y_pred must be 1-d vectors of equal length")
    if y_true.size == 0:
        raise DataError("cannot build a confusion matrix from zero rows")
    pos_true = y_true == 1
    pos_pred = y_pred == 1
    tp = int(np.sum(pos_true & pos_pred))
    fp = int(np.sum(~pos_true & pos_pred))
    fn = int(np.sum(pos_true & ~pos_pred))
    tn = int(np.sum(~pos_true & ~pos_pred))
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def derive_metrics(matrix: ConfusionMatrix) -> DerivedMetrics:
    """Accuracy, precision = TP/(TP+FP), recall = TP/(TP+FN), f1 = 2PR/(P+R).

    Zero-denominator cases yield 0.0 and a flag instead of raising, so a
    degenerate fold never aborts a larger evaluation.
    """
    if matrix.total == 0:
        raise DataError("confusion matrix is empty")
    flags = set()
    accuracy = (matrix.tp + matrix.tn) / matrix.total
    if matrix.tp + matrix.fp > 0:
        precision = matrix.tp / (matrix.tp + matrix.fp)
    else:
        precision = 0.0
        flags.add(PRECISION_UNDEFINED)
    if matrix.tp + matrix.fn > 0:
        recall = matrix.tp / (matrix.tp + matrix.fn)
    else:
        recall = 0.0
        flags.add(RECALL_UNDEFINED)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.add(F1_UNDEFINED)
    return DerivedMetrics(accuracy, precision, recall, f1, frozenset(flags))


def roc_auc(y_true, scores) -> float:
    """Mann-Whitney AUC via average ranks (ties count one half).

    Equals P(score_pos > score_neg) + 0.5 * P(score_pos == score_neg)
    over all (positive, negative) pairs.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if y_true.shape != scores.shape or y_true.ndim != 1:
        raise DataError("labels and scores must be 1-d vectors of equal length")
    n_pos = int(np.sum(y_true == 1))
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC AUC undefined: y_true contains a single class")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    avg_rank = (starts + ends + 1) / 2.0  # 1-based average rank per tie group
    rank_sum = float(avg_rank[inverse][y_true == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class MetricsReport:
    """One evaluation: scalar metrics, timing, and the underlying matrix."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    pred_time_s: float
    matrix: ConfusionMatrix
    degenerate_flags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        for name in ("accuracy", "precision", "recall", "f1", "roc_auc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} out of range: {v}")
        if self.pred_time_s < 0:
            raise DataError("pred_time_s must be non-negative")

    def to_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc": self.roc_auc,
            "pred_time_s": self.pred_time_s,
            "degenerate_flags": sorted(self.degenerate_flags),
        }
        d.update(self.matrix.to_dict())
        return d


def evaluate_predictions(y_true, y_pred, scores, pred_time_s: float) -> MetricsReport:
    """Assemble a full MetricsReport from one batch of predictions."""
    matrix = confusion(y_true, y_pred)
    derived = derive_metrics(matrix)
    auc = roc_auc(y_true, scores)
    return MetricsReport(
        accuracy=derived.accuracy,
        precision=derived.precision,
        recall=derived.recall,
        f1=derived.f1,
        roc_auc=auc,
        pred_time_s=pred_time_s,
        matrix=matrix,
        degenerate_flags=derived.degenerate_flags,
    )


def time_predict(model, X) -> tuple[np.ndarray, float]:
    """Run model.predict under a monotonic clock; returns (labels, seconds).

    Only the predict call is timed; input preparation happens outside.
    """
    start = time.perf_counter()
    labels = model.predict(X)
    elapsed = time.perf_counter() - start
    return labels, elapsed
