"""Command-line pipeline: synth, prepare, tune, train, predict.

Every command is deterministic given (inputs, seed) apart from wall-clock
timing fields. Exit codes: 0 success, 1 internal error, 2 invalid input
or configuration.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .crossval import CrossValConfig, SCALING_MODES
from .errors import ConfigError, DataError, FlowForestError
from .flowdata import (
    CleanPolicy,
    Dataset,
    DEFAULT_EXCLUDED_COLUMNS,
    ScalerParams,
    apply_scaler,
    clean_csv,
    fit_scaler,
    train_test_split,
    write_csv,
)
from .forest import FeatureMode, ForestHyperparams
from .modelfile import load_model
from .synthgen import SynthConfig, generate
from .tuner import CSV_COLUMNS, GridSpec, finalize, grid_search


def _write_json(obj: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    return cfg


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    config = _load_config(getattr(args, "config", None))
    unknown = set(config) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged.update(config)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _int_list(value) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    try:
        return tuple(int(part) for part in str(value).split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {value!r}") from None


def _mode_list(value) -> tuple[FeatureMode, ...]:
    parts = value if isinstance(value, (list, tuple)) else str(value).split(",")
    return tuple(FeatureMode.parse(str(p)) for p in parts if str(p).strip())


def _name_set(value) -> frozenset[str]:
    if isinstance(value, (list, tuple, set, frozenset)):
        return frozenset(str(v).strip() for v in value)
    return frozenset(p.strip() for p in str(value).split(",") if p.strip())


def _policy_from(cfg: dict) -> CleanPolicy:
    positive = cfg.get("positive_labels")
    return CleanPolicy(
        drop_nonfinite=bool(cfg["drop_nonfinite"]),
        drop_duplicate_rows=bool(cfg["drop_duplicates"]),
        positive_label_names=_name_set(positive) if positive else None,
        excluded_columns=_name_set(cfg["exclude_columns"]),
        label_column=str(cfg["label_column"]),
    )


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


_POLICY_DEFAULTS = {
    "label_column": "Label",
    "exclude_columns": sorted(DEFAULT_EXCLUDED_COLUMNS),
    "drop_nonfinite": True,
    "drop_duplicates": True,
    "positive_labels": None,
}


def _add_policy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--label-column", dest="label_column")
    p.add_argument(
        "--exclude-columns",
        dest="exclude_columns",
        help="comma-separated column names to drop before training",
    )
    p.add_argument(
        "--drop-nonfinite",
        dest="drop_nonfinite",
        action=argparse.BooleanOptionalAction,
        help="drop rows with non-finite or unparseable cells (default: on)",
    )
    p.add_argument(
        "--drop-duplicates",
        dest="drop_duplicates",
        action=argparse.BooleanOptionalAction,
        help="drop exact duplicate rows (default: on)",
    )
    p.add_argument(
        "--positive-labels",
        dest="positive_labels",
        help="comma-separated labels mapping to the attack class",
    )


# ---------------------------------------------------------------- synth

_SYNTH_DEFAULTS = {
    "output": None,
    "rows": 1000,
    "attack_fraction": 0.5,
    "n_features": 82,
    "class_separation": 4.0,
    "noise_std": 1.0,
    "seed": 42,
    "label_column": "Label",
}


def cmd_synth(args) -> int:
    cfg = _resolve(args, _SYNTH_DEFAULTS)
    if not cfg["output"]:
        raise ConfigError("--output is required")
    synth = SynthConfig(
        n_rows=int(cfg["rows"]),
        attack_fraction=float(cfg["attack_fraction"]),
        n_features=int(cfg["n_features"]),
        class_separation=float(cfg["class_separation"]),
        noise_std=float(cfg["noise_std"]),
        seed=int(cfg["seed"]),
    )
    dataset = generate(synth)
    write_csv(dataset, cfg["output"], label_column=str(cfg["label_column"]))
    neg, pos = dataset.class_counts()
    print(f"wrote {dataset.n_rows} rows ({pos} attack, {neg} benign) to {cfg['output']}")
    return 0


# -------------------------------------------------------------- prepare

_PREPARE_DEFAULTS = {"input": None, "output_dir": "out", **_POLICY_DEFAULTS}


def cmd_prepare(args) -> int:
    cfg = _resolve(args, _PREPARE_DEFAULTS)
    if not cfg["input"]:
        raise ConfigError("--input is required")
    policy = _policy_from(cfg)
    dataset, stats = clean_csv(cfg["input"], policy)
    out = _out_dir(cfg)
    cleaned_path = out / "cleaned.csv"
    write_csv(dataset, str(cleaned_path), label_column=policy.label_column,
              label_names=("0", "1"))
    _write_json(stats.to_dict(), out / "clean_stats.json")
    print(
        f"cleaned {stats.rows_in} rows -> {stats.rows_out} "
        f"(nonfinite {stats.nonfinite_dropped}, duplicates {stats.duplicates_dropped}, "
        f"columns excluded {stats.columns_excluded})"
    )
    print(f"wrote {cleaned_path}")
    return 0


# ----------------------------------------------------------------- tune

_TUNE_DEFAULTS = {
    "input": None,
    "output_dir": "out",
    "seed": 42,
    "folds": 5,
    "scaling_mode": "paper",
    "grid_estimators": list(GridSpec().estimator_options),
    "grid_depths": list(GridSpec().depth_options),
    "grid_features": [f.value for f in GridSpec().feature_options],
    "threads": 1,
    **_POLICY_DEFAULTS,
}


def cmd_tune(args) -> int:
    cfg = _resolve(args, _TUNE_DEFAULTS)
    if not cfg["input"]:
        raise ConfigError("--input is required")
    if cfg["scaling_mode"] not in SCALING_MODES:
        raise ConfigError(f"scaling-mode must be one of {SCALING_MODES}")
    dataset, _ = clean_csv(cfg["input"], _policy_from(cfg))
    grid = GridSpec(
        estimator_options=_int_list(cfg["grid_estimators"]),
        depth_options=_int_list(cfg["grid_depths"]),
        feature_options=_mode_list(cfg["grid_features"]),
    )
    cv = CrossValConfig(n_splits=int(cfg["folds"]), shuffle=True,
                        random_state=int(cfg["seed"]))
    if cfg["scaling_mode"] == "paper":
        X = apply_scaler(dataset.X, fit_scaler(dataset.X))
    else:
        X = dataset.X
    print(f"grid search: {grid.size} configurations x {cv.n_splits} folds "
          f"on {dataset.n_rows} rows ({cfg['scaling_mode']} scaling)")

    def progress(hp, result):
        print(
            f"  n_estimators={hp.n_estimators:>3} max_depth={hp.max_depth:>2} "
            f"features={hp.feature_mode.value:<4} "
            f"accuracy={result.mean.accuracy:.6f} "
            f"pred_time={result.mean.pred_time_s:.4f}s"
        )

    result = grid_search(
        X,
        dataset.y,
        grid=grid,
        cv=cv,
        base_seed=int(cfg["seed"]),
        scaling_mode=cfg["scaling_mode"],
        threads=int(cfg["threads"]),
        progress=progress,
    )
    out = _out_dir(cfg)
    _write_json(result.to_dict(), out / "tune_result.json")
    with open(out / "tune_result.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(result.to_csv_rows())
    best = result.best
    print(
        f"best: n_estimators={best.n_estimators} max_depth={best.max_depth} "
        f"features={best.feature_mode.value} "
        f"(accuracy {result.best_accuracy:.6f}, pred_time {result.best_pred_time_s:.4f}s)"
    )
    print(f"wrote {out / 'tune_result.json'} and {out / 'tune_result.csv'}")
    return 0


# ---------------------------------------------------------------- train

_TRAIN_DEFAULTS = {
    "input": None,
    "output_dir": "out",
    "seed": 42,
    "n_estimators": 20,
    "max_depth": 10,
    "feature_mode": "all",
    "test_fraction": 0.2,
    "scaling_mode": "paper",
    "threads": 1,
    **_POLICY_DEFAULTS,
}


def cmd_train(args) -> int:
    cfg = _resolve(args, _TRAIN_DEFAULTS)
    if not cfg["input"]:
        raise ConfigError("--input is required")
    if cfg["scaling_mode"] not in SCALING_MODES:
        raise ConfigError(f"scaling-mode must be one of {SCALING_MODES}")
    policy = _policy_from(cfg)
    dataset, _ = clean_csv(cfg["input"], policy)
    train, test = train_test_split(dataset, float(cfg["test_fraction"]), int(cfg["seed"]))
    # paper mode fits the scaler before the split (on the full matrix);
    # strict mode fits on the training partition only
    if cfg["scaling_mode"] == "paper":
        scaler = fit_scaler(dataset.X)
    else:
        scaler = fit_scaler(train.X)
    train_scaled = Dataset(apply_scaler(train.X, scaler), train.y, train.feature_names)
    test_scaled = Dataset(apply_scaler(test.X, scaler), test.y, test.feature_names)
    hp = ForestHyperparams(
        n_estimators=int(cfg["n_estimators"]),
        max_depth=int(cfg["max_depth"]),
        feature_mode=FeatureMode.parse(str(cfg["feature_mode"])),
        seed=int(cfg["seed"]),
    )
    out = _out_dir(cfg)
    model_path = out / "model.bin"
    model, report = finalize(train_scaled, test_scaled, hp,
                             model_path=str(model_path), threads=int(cfg["threads"]))
    scaler_path = Path(str(model_path) + ".scaler.json")
    _write_json(
        {
            **scaler.to_dict(),
            "feature_names": dataset.feature_names,
            "label_column": policy.label_column,
        },
        scaler_path,
    )
    _write_json(
        {
            "metrics": report.to_dict(),
            "hyperparams": hp.to_dict(),
            "scaling_mode": cfg["scaling_mode"],
            "test_fraction": float(cfg["test_fraction"]),
            "seed": int(cfg["seed"]),
            "train_rows": train.n_rows,
            "test_rows": test.n_rows,
            "model_path": str(model_path),
            "scaler_path": str(scaler_path),
        },
        out / "train_report.json",
    )
    print(
        f"trained on {train.n_rows} rows, evaluated on {test.n_rows}: "
        f"accuracy={report.accuracy:.6f} precision={report.precision:.6f} "
        f"recall={report.recall:.6f} f1={report.f1:.6f} roc_auc={report.roc_auc:.6f}"
    )
    print(f"wrote {model_path}, {scaler_path}, {out / 'train_report.json'}")
    return 0


# -------------------------------------------------------------- predict

_PREDICT_DEFAULTS = {
    "input": None,
    "model": None,
    "output_dir": "out",
    "label_column": "Label",
    "block_rows": 262144,
}


def _read_feature_matrix(path: str, feature_names: list[str], label_column: str,
                         n_expected: int) -> np.ndarray:
    """Parse a prediction input CSV into an (n, n_expected) float matrix.

    Selects the training feature columns by name when they are all
    present; otherwise uses every column except the label column. Rows
    are never dropped: any non-finite cell is an error.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: no rows")
        stripped = [c.strip() for c in header]
        if set(feature_names) <= set(stripped):
            cols = [stripped.index(name) for name in feature_names]
        else:
            cols = [i for i, name in enumerate(stripped) if name != label_column]
        if len(cols) != n_expected:
            raise DataError(
                f"{path}: input provides {len(cols)} feature columns, "
                f"model expects {n_expected}"
            )
        rows = []
        width = len(stripped)
        for i, cells in enumerate(reader):
            if len(cells) != width:
                raise DataError(f"{path}: row {i}: expected {width} cells, got {len(cells)}")
            try:
                values = [float(cells[c]) for c in cols]
            except ValueError:
                raise DataError(f"{path}: row {i}: unparseable feature value") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}: row {i}: non-finite feature value")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def cmd_predict(args) -> int:
    cfg = _resolve(args, _PREDICT_DEFAULTS)
    if not cfg["input"] or not cfg["model"]:
        raise ConfigError("--input and --model are required")
    model = load_model(cfg["model"])
    scaler_path = Path(str(cfg["model"]) + ".scaler.json")
    if not scaler_path.exists():
        raise DataError(
            f"scaler sidecar {scaler_path} not found; it is written next to the "
            f"model by the train command"
        )
    with open(scaler_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    scaler = ScalerParams.from_dict(sidecar)
    feature_names = list(sidecar.get("feature_names", []))
    label_column = str(cfg["label_column"] or sidecar.get("label_column", "Label"))

    X = _read_feature_matrix(
        str(cfg["input"]), feature_names, label_column, model.n_features_trained
    )
    X = apply_scaler(X, scaler)
    block = max(1, int(cfg["block_rows"]))
    labels = np.empty(X.shape[0], dtype=np.int64)
    seconds = 0.0
    for start in range(0, X.shape[0], block):
        chunk = X[start:start + block]
        t0 = time.perf_counter()
        labels[start:start + block] = model.predict(chunk)
        seconds += time.perf_counter() - t0

    out = _out_dir(cfg)
    pred_path = out / "predictions.csv"
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("prediction\n")
        fh.writelines(f"{int(v)}\n" for v in labels)
    summary = {
        "rows": int(X.shape[0]),
        "seconds": seconds,
        "rows_per_second": X.shape[0] / seconds if seconds > 0 else 0.0,
    }
    _write_json(summary, out / "predict_summary.json")
    print(
        f"predicted {summary['rows']} rows in {summary['seconds']:.4f}s "
        f"({summary['rows_per_second']:.0f} rows/s); "
        f"{int(labels.sum())} flagged as attack"
    )
    print(f"wrote {pred_path} and {out / 'predict_summary.json'}")
    return 0


# ----------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowforest",
        description="SYN flood detection pipeline: synthesize, prepare, tune, train, predict.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic flow CSV")
    p.add_argument("--config")
    p.add_argument("--output")
    p.add_argument("--rows", type=int)
    p.add_argument("--attack-fraction", dest="attack_fraction", type=float)
    p.add_argument("--n-features", dest="n_features", type=int)
    p.add_argument("--class-separation", dest="class_separation", type=float)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--label-column", dest="label_column")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="clean a flow CSV and emit stats")
    p.add_argument("--config")
    p.add_argument("--input")
    p.add_argument("--output-dir", dest="output_dir")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("tune", help="exhaustive grid search with cross-validation")
    p.add_argument("--config")
    p.add_argument("--input")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--scaling-mode", dest="scaling_mode", choices=SCALING_MODES)
    p.add_argument("--grid-estimators", dest="grid_estimators")
    p.add_argument("--grid-depths", dest="grid_depths")
    p.add_argument("--grid-features", dest="grid_features")
    p.add_argument("--threads", type=int)
    _add_policy_flags(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("train", help="train a final model and evaluate on a held-out split")
    p.add_argument("--config")
    p.add_argument("--input")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-estimators", dest="n_estimators", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--feature-mode", dest="feature_mode", choices=["sqrt", "log2", "all"])
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--scaling-mode", dest="scaling_mode", choices=SCALING_MODES)
    p.add_argument("--threads", type=int)
    _add_policy_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify flows with a saved model")
    p.add_argument("--config")
    p.add_argument("--input")
    p.add_argument("--model")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--block-rows", dest="block_rows", type=int)
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FlowForestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
