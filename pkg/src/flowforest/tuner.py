"""Exhaustive hyperparameter grid search with accuracy-then-latency selection."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterable, Optional

from .crossval import CrossValConfig, CrossValResult, cross_val_model, stratified_kfold
from .errors import ConfigError, DataError
from .flowdata import Dataset
from .forest import FeatureMode, ForestHyperparams, ForestModel, fit_forest
from .metrics import MetricsReport, evaluate_predictions, time_predict
from .modelfile import save_model

DEFAULT_ESTIMATOR_OPTIONS = (10, 20, 50, 100)
DEFAULT_DEPTH_OPTIONS = (5, 10, 15, 20)
DEFAULT_FEATURE_OPTIONS = (FeatureMode.SQRT, FeatureMode.LOG2, FeatureMode.ALL)


@dataclass(frozen=True)
class GridSpec:
    estimator_options: tuple[int, ...] = DEFAULT_ESTIMATOR_OPTIONS
    depth_options: tuple[int, ...] = DEFAULT_DEPTH_OPTIONS
    feature_options: tuple[FeatureMode, ...] = DEFAULT_FEATURE_OPTIONS

    def __post_init__(self):
        if not self.estimator_options or not self.depth_options or not self.feature_options:
            raise ConfigError("grid option lists must be non-empty")
        if any(e < 1 for e in self.estimator_options):
            raise ConfigError("estimator options must be >= 1")
        if any(d < 1 for d in self.depth_options):
            raise ConfigError("depth options must be >= 1")
        if any(not isinstance(f, FeatureMode) for f in self.feature_options):
            raise ConfigError("feature options must be FeatureMode values")

    @property
    def size(self) -> int:
        return (
            len(self.estimator_options)
            * len(self.depth_options)
            * len(self.feature_options)
        )

    def combinations(self):
        """Canonical iteration order: estimators, then depth, then features."""
        return product(self.estimator_options, self.depth_options, self.feature_options)

    def to_dict(self) -> dict:
        return {
            "estimator_options": list(self.estimator_options),
            "depth_options": list(self.depth_options),
            "feature_options": [f.value for f in self.feature_options],
        }


@dataclass
class ConfigResult:
    hyperparams: ForestHyperparams
    cross_validation: CrossValResult

    def to_dict(self) -> dict:
        d = self.hyperparams.to_dict()
        d["cross_validation"] = self.cross_validation.to_dict()
        return d


@dataclass
class TuneResult:
    per_config: list[ConfigResult]
    best: ForestHyperparams
    best_accuracy: float
    best_pred_time_s: float
    grid: GridSpec
    cv: CrossValConfig
    scaling_mode: str
    base_seed: int

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "cv": self.cv.to_dict(),
            "scaling_mode": self.scaling_mode,
            "base_seed": self.base_seed,
            "per_config": [c.to_dict() for c in self.per_config],
            "best": self.best.to_dict(),
            "best_accuracy": self.best_accuracy,
            "best_pred_time_s": self.best_pred_time_s,
        }

    def to_csv_rows(self) -> list[dict]:
        """One row per configuration, mean-of-folds aggregates."""
        rows = []
        for c in self.per_config:
            mean = c.cross_validation.mean
            rows.append(
                {
                    "n_estimators": c.hyperparams.n_estimators,
                    "max_depth": c.hyperparams.max_depth,
                    "feature_mode": c.hyperparams.feature_mode.value,
                    "accuracy": mean.accuracy,
                    "f1": mean.f1,
                    "recall": mean.recall,
                    "roc_auc": mean.roc_auc,
                    "pred_time_s": mean.pred_time_s,
                }
            )
        return rows


CSV_COLUMNS = (
    "n_estimators",
    "max_depth",
    "feature_mode",
    "accuracy",
    "f1",
    "recall",
    "roc_auc",
    "pred_time_s",
)


def select_best(
    entries: Iterable[tuple[ForestHyperparams, float, float]],
) -> tuple[ForestHyperparams, float, float]:
    """Replay the sequential update rule over (hp, accuracy, pred_time).

    A later entry wins only with strictly higher accuracy, or equal
    accuracy and strictly lower prediction time; exact ties keep the
    earlier entry.
    """
    best = None
    for hp, accuracy, pred_time in entries:
        if best is None:
            best = (hp, accuracy, pred_time)
            continue
        _, best_accuracy, best_pred_time = best
        if accuracy > best_accuracy or (
            accuracy == best_accuracy and pred_time < best_pred_time
        ):
            best = (hp, accuracy, pred_time)
    if best is None:
        raise ConfigError("no configurations to select from")
    return best


def grid_search(
    X,
    y,
    grid: GridSpec = GridSpec(),
    cv: CrossValConfig = CrossValConfig(),
    base_seed: int = 42,
    scaling_mode: str = "paper",
    threads: int = 1,
    evaluate: Optional[Callable[[ForestHyperparams], CrossValResult]] = None,
    progress: Optional[Callable[[ForestHyperparams, CrossValResult], None]] = None,
) -> TuneResult:
    """Cross-validate every grid combination and pick the winner.

    The same fold plan is reused for all combinations. ``evaluate`` can
    replace cross_val_model (e.g. with a stub table), which makes the
    selection logic testable in isolation.
    """
    if evaluate is None:
        plan = stratified_kfold(y, cv)
        presort_cache: dict = {}

        def evaluate(hp: ForestHyperparams) -> CrossValResult:
            return cross_val_model(
                hp,
                X,
                y,
                plan,
                scaling_mode=scaling_mode,
                threads=threads,
                presort_cache=presort_cache,
            )

    per_config = []
    for n_estimators, max_depth, feature_mode in grid.combinations():
        hp = ForestHyperparams(
            n_estimators=n_estimators,
            max_depth=max_depth,
            feature_mode=feature_mode,
            seed=base_seed,
        )
        try:
            result = evaluate(hp)
        except Exception as exc:
            note = (
                f"grid combination (n_estimators={n_estimators}, "
                f"max_depth={max_depth}, feature_mode={feature_mode.value}): {exc}"
            )
            try:
                annotated = type(exc)(note)
            except Exception:
                raise DataError(note) from exc
            raise annotated from exc
        per_config.append(ConfigResult(hyperparams=hp, cross_validation=result))
        if progress is not None:
            progress(hp, result)

    best_hp, best_accuracy, best_pred_time = select_best(
        (c.hyperparams, c.cross_validation.mean.accuracy, c.cross_validation.mean.pred_time_s)
        for c in per_config
    )
    return TuneResult(
        per_config=per_config,
        best=best_hp,
        best_accuracy=best_accuracy,
        best_pred_time_s=best_pred_time,
        grid=grid,
        cv=cv,
        scaling_mode=scaling_mode,
        base_seed=base_seed,
    )


def finalize(
    train: Dataset,
    test: Dataset,
    best: ForestHyperparams,
    model_path: Optional[str] = None,
    threads: int = 1,
) -> tuple[ForestModel, MetricsReport]:
    """Train one forest with the chosen hyperparameters and evaluate once.

    The model is written to model_path when given. Deterministic apart
    from the timing field.
    """
    if train.n_features != test.n_features:
        raise DataError("train and test feature counts differ")
    for name, ds in (("train", train), ("test", test)):
        neg, pos = ds.class_counts()
        if neg == 0 or pos == 0:
            raise DataError(f"{name} partition is single-class")
    model = fit_forest(train.X, train.y, best, threads=threads)
    labels, seconds = time_predict(model, test.X)
    scores = model.predict_score(test.X)
    report = evaluate_predictions(test.y, labels, scores, seconds)
    if model_path is not None:
        save_model(model, model_path)
    return model, report
