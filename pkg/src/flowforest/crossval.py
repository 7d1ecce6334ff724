"""Stratified K-fold construction and the per-fold train/evaluate loop."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .flowdata import apply_scaler, fit_scaler
from .forest import FeatureMode, ForestHyperparams, derive_seed, fit_forest, presort_columns
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    derive_metrics,
    evaluate_predictions,
    time_predict,
)

SCALING_MODES = ("paper", "strict")


@dataclass(frozen=True)
class CrossValConfig:
    n_splits: int = 5
    shuffle: bool = True
    random_state: int = 42

    def __post_init__(self):
        if self.n_splits < 2:
            raise ConfigError("n_splits must be >= 2")

    def to_dict(self) -> dict:
        return {
            "n_splits": self.n_splits,
            "shuffle": self.shuffle,
            "random_state": self.random_state,
        }


@dataclass
class SplitPlan:
    """Per-fold (train_indices, test_indices); test sets partition the rows."""

    folds: list[tuple[np.ndarray, np.ndarray]]
    n_rows: int


def stratified_kfold(y, cfg: CrossValConfig = CrossValConfig()) -> SplitPlan:
    """Deal each class into n_splits quota groups; fold k tests on group k.

    Per class, indices are shuffled (when cfg.shuffle) with random_state,
    then cut into contiguous groups of size ceil or floor of
    class_count / n_splits, ceil groups first.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.ndim != 1 or y.size == 0:
        raise DataError("y must be a non-empty 1-d label vector")
    k = cfg.n_splits
    rng = np.random.default_rng(int(cfg.random_state) & ((1 << 64) - 1))
    groups: list[list[np.ndarray]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise DataError(
                f"class {int(cls)} has {len(idx)} rows, fewer than n_splits={k}"
            )
        if cfg.shuffle:
            rng.shuffle(idx)
        base, extra = divmod(len(idx), k)
        offset = 0
        for fold in range(k):
            size = base + (1 if fold < extra else 0)
            groups[fold].append(idx[offset:offset + size])
            offset += size
    all_idx = np.arange(y.size)
    folds = []
    for fold in range(k):
        test = np.sort(np.concatenate(groups[fold]))
        mask = np.ones(y.size, dtype=bool)
        mask[test] = False
        folds.append((all_idx[mask], test))
    return SplitPlan(folds=folds, n_rows=y.size)


@dataclass(frozen=True)
class AggregateMetrics:
    """Arithmetic means of the per-fold scalar metrics."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    pred_time_s: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc": self.roc_auc,
            "pred_time_s": self.pred_time_s,
        }


@dataclass
class CrossValResult:
    """Per-fold reports plus mean and pooled aggregates.

    ``mean`` averages fold metrics (the headline aggregate); ``pooled``
    re-derives accuracy/precision/recall/f1 from the cellwise-summed
    confusion matrix. The two differ when fold sizes differ.
    """

    fold_reports: list[MetricsReport]
    mean: AggregateMetrics
    pooled: dict
    matrix_total: ConfusionMatrix
    scaling_mode: str

    def to_dict(self) -> dict:
        return {
            "scaling_mode": self.scaling_mode,
            "n_splits": len(self.fold_reports),
            "folds": [r.to_dict() for r in self.fold_reports],
            "aggregate": {
                "mean": self.mean.to_dict(),
                "pooled": self.pooled,
                "matrix": self.matrix_total.to_dict(),
            },
        }


def _aggregate(fold_reports: list[MetricsReport], scaling_mode: str) -> CrossValResult:
    n = len(fold_reports)
    mean = AggregateMetrics(
        accuracy=sum(r.accuracy for r in fold_reports) / n,
        precision=sum(r.precision for r in fold_reports) / n,
        recall=sum(r.recall for r in fold_reports) / n,
        f1=sum(r.f1 for r in fold_reports) / n,
        roc_auc=sum(r.roc_auc for r in fold_reports) / n,
        pred_time_s=sum(r.pred_time_s for r in fold_reports) / n,
    )
    total = fold_reports[0].matrix
    for r in fold_reports[1:]:
        total = total + r.matrix
    pooled = derive_metrics(total)
    return CrossValResult(
        fold_reports=fold_reports,
        mean=mean,
        pooled={
            "accuracy": pooled.accuracy,
            "precision": pooled.precision,
            "recall": pooled.recall,
            "f1": pooled.f1,
            "degenerate_flags": sorted(pooled.degenerate_flags),
        },
        matrix_total=total,
        scaling_mode=scaling_mode,
    )


def cross_val_model(
    hp: ForestHyperparams,
    X,
    y,
    plan: SplitPlan,
    scaling_mode: str = "paper",
    threads: int = 1,
    presort_cache: Optional[dict] = None,
) -> CrossValResult:
    """Train and evaluate one hyperparameter combination across all folds.

    In "paper" mode X is expected to arrive already scaled (the scaler was
    fit on the full matrix before splitting). In "strict" mode X arrives
    raw and a scaler is fit per fold on the training partition only.
    Fold i's forest uses seed derive_seed(hp.seed, i).
    """
    if scaling_mode not in SCALING_MODES:
        raise ConfigError(f"scaling_mode must be one of {SCALING_MODES}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if plan.n_rows != y.size or X.shape[0] != y.size:
        raise DataError("split plan does not match the dataset size")

    reports = []
    for fold_i, (train_idx, test_idx) in enumerate(plan.folds):
        y_train = y[train_idx]
        if len(np.unique(y_train)) < 2:
            raise DataError(f"fold {fold_i}: training partition is single-class")
        X_train = X[train_idx]
        X_test = X[test_idx]
        if scaling_mode == "strict":
            scaler = fit_scaler(X_train)
            X_train = apply_scaler(X_train, scaler)
            X_test = apply_scaler(X_test, scaler)
        presorted = None
        if hp.feature_mode is FeatureMode.ALL and presort_cache is not None:
            # sort order is invariant under per-column standardization,
            # so one presort of the raw fold serves every configuration
            presorted = presort_cache.get(fold_i)
            if presorted is None:
                presorted = presort_columns(X_train)
                presort_cache[fold_i] = presorted
        fold_hp = replace(hp, seed=derive_seed(hp.seed, fold_i))
        model = fit_forest(X_train, y_train, fold_hp, threads=threads, presorted=presorted)
        labels, seconds = time_predict(model, X_test)
        scores = model.predict_score(X_test)
        reports.append(evaluate_predictions(y[test_idx], labels, scores, seconds))
    return _aggregate(reports, scaling_mode)
