"""CSV flow-record ingestion, cleaning, label encoding, scaling, and splitting.

Input files are CIC-style flow CSVs: one row per network flow, numeric
feature columns plus a text label column. Identifier columns (flow id,
endpoints, timestamp) carry no signal and are excluded by default.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

# Identifier columns commonly present in raw CIC-DDoS2019 exports. Six
# columns, so an 88-column raw file reduces to 82 features by default.
DEFAULT_EXCLUDED_COLUMNS = frozenset(
    {
        "Flow ID",
        "Source IP",
        "Destination IP",
        "Source Port",
        "Destination Port",
        "Timestamp",
    }
)

# "0" is included so that already-encoded numeric labels survive a second
# cleaning pass unchanged (prepare is idempotent).
DEFAULT_BENIGN_LABELS = frozenset({"BENIGN", "0"})


@dataclass
class RawTable:
    """Unparsed CSV contents: header names plus text cells, row-major."""

    header: list[str]
    rows: list[list[str]]
    source_path: str = ""

    def __post_init__(self):
        width = len(self.header)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise DataError(
                    f"row {i}: expected {width} cells, got {len(row)}"
                )


@dataclass
class Dataset:
    """Numeric feature matrix with binary labels (0 = benign, 1 = attack)."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise DataError("X must be a 2-d matrix")
        n_rows, n_features = self.X.shape
        if n_rows < 1:
            raise DataError("dataset has no rows")
        if n_features < 1:
            raise DataError("dataset has no feature columns")
        if len(self.feature_names) != n_features:
            raise DataError("feature_names length does not match X columns")
        if self.y.shape != (n_rows,):
            raise DataError("y length does not match X rows")
        if not np.isfinite(self.X).all():
            raise DataError("X contains non-finite values")
        if not np.isin(self.y, (0, 1)).all():
            raise DataError("y must contain only 0 and 1")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> tuple[int, int]:
        pos = int(np.sum(self.y == 1))
        return len(self.y) - pos, pos


@dataclass
class ScalerParams:
    """Per-column standardization parameters (population standard deviation)."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        if self.means.shape != self.stds.shape or self.means.ndim != 1:
            raise ConfigError("means and stds must be 1-d vectors of equal length")
        if (self.stds < 0).any():
            raise ConfigError("standard deviations must be non-negative")

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(np.asarray(d["means"]), np.asarray(d["stds"]))


@dataclass(frozen=True)
class CleanPolicy:
    """Knobs controlling row dropping, column exclusion, and label encoding.

    With ``positive_label_names=None`` every label outside
    ``benign_label_names`` maps to 1. When an explicit positive set is
    given, any label outside both sets is an error.
    """

    drop_nonfinite: bool = True
    drop_duplicate_rows: bool = True
    positive_label_names: Optional[frozenset[str]] = None
    benign_label_names: frozenset[str] = DEFAULT_BENIGN_LABELS
    excluded_columns: frozenset[str] = DEFAULT_EXCLUDED_COLUMNS
    label_column: str = "Label"


@dataclass
class CleanStats:
    """Row/column accounting for one cleaning pass."""

    rows_in: int = 0
    rows_out: int = 0
    nonfinite_dropped: int = 0
    duplicates_dropped: int = 0
    columns_excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "rows_in": self.rows_in,
            "rows_out": self.rows_out,
            "nonfinite_dropped": self.nonfinite_dropped,
            "duplicates_dropped": self.duplicates_dropped,
            "columns_excluded": self.columns_excluded,
        }


def load_csv(path: str, has_header: bool = True) -> RawTable:
    """Read a CSV file into a RawTable.

    Header is taken from the first line when ``has_header``, otherwise
    synthesized as col_0..col_{k-1}. Rows whose cell count differs from
    the header width raise DataError naming the row index.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise DataError(f"{path}: no rows")
        if has_header:
            header = list(first)
            rows = []
        else:
            header = [f"col_{i}" for i in range(len(first))]
            rows = [list(first)]
        width = len(header)
        for i, row in enumerate(reader, start=len(rows)):
            if len(row) != width:
                raise DataError(f"{path}: row {i}: expected {width} cells, got {len(row)}")
            rows.append(row)
    return RawTable(header=header, rows=rows, source_path=path)


def _encode_label(label: str, policy: CleanPolicy) -> int:
    text = label.strip()
    if policy.positive_label_names is not None:
        if text in policy.positive_label_names:
            return 1
        if text in policy.benign_label_names:
            return 0
        raise DataError(f"label {text!r} not covered by the label mapping")
    return 0 if text in policy.benign_label_names else 1


def _resolve_columns(header: Sequence[str], policy: CleanPolicy):
    stripped = [name.strip() for name in header]
    try:
        label_idx = stripped.index(policy.label_column)
    except ValueError:
        raise DataError(
            f"label column {policy.label_column!r} not found in header"
        ) from None
    feature_idx = []
    feature_names = []
    excluded = 0
    for i, name in enumerate(stripped):
        if i == label_idx:
            continue
        if name in policy.excluded_columns:
            excluded += 1
            continue
        feature_idx.append(i)
        feature_names.append(name)
    if not feature_idx:
        raise DataError("no feature columns remain after exclusions")
    return label_idx, feature_idx, feature_names, excluded


def _clean_rows(
    header: Sequence[str],
    rows: Iterable[Sequence[str]],
    policy: CleanPolicy,
) -> tuple[Dataset, CleanStats]:
    label_idx, feature_idx, feature_names, n_excluded = _resolve_columns(header, policy)
    stats = CleanStats(columns_excluded=n_excluded)

    kept_rows: list[np.ndarray] = []
    kept_labels: list[int] = []
    seen: set[bytes] = set()
    width = len(header)

    for i, cells in enumerate(rows):
        if len(cells) != width:
            raise DataError(f"row {i}: expected {width} cells, got {len(cells)}")
        stats.rows_in += 1
        label = _encode_label(cells[label_idx], policy)
        values = np.empty(len(feature_idx), dtype=np.float64)
        ok = True
        for j, col in enumerate(feature_idx):
            try:
                v = float(cells[col])
            except ValueError:
                ok = False
                break
            if not math.isfinite(v):
                ok = False
                break
            values[j] = v
        if not ok:
            if policy.drop_nonfinite:
                stats.nonfinite_dropped += 1
                continue
            raise DataError(
                f"row {i}: non-finite or unparseable value "
                f"(set drop_nonfinite to drop such rows)"
            )
        if policy.drop_duplicate_rows:
            key = values.tobytes() + bytes([label])
            if key in seen:
                stats.duplicates_dropped += 1
                continue
            seen.add(key)
        kept_rows.append(values)
        kept_labels.append(label)

    if not kept_rows:
        raise DataError("all rows were dropped during cleaning")
    stats.rows_out = len(kept_rows)
    dataset = Dataset(
        X=np.vstack(kept_rows),
        y=np.asarray(kept_labels, dtype=np.int64),
        feature_names=feature_names,
    )
    return dataset, stats


def clean(raw: RawTable, policy: CleanPolicy = CleanPolicy()) -> tuple[Dataset, CleanStats]:
    """Convert a RawTable into a numeric Dataset under the given policy."""
    return _clean_rows(raw.header, raw.rows, policy)


def clean_csv(
    path: str,
    policy: CleanPolicy = CleanPolicy(),
    has_header: bool = True,
) -> tuple[Dataset, CleanStats]:
    """Streaming equivalent of load_csv followed by clean.

    Avoids materializing the text cells of large files; produces exactly
    the same Dataset and CleanStats as the two-step path.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise DataError(f"{path}: no rows")
        if has_header:
            header = list(first)
            body: Iterator[Sequence[str]] = reader
        else:
            header = [f"col_{i}" for i in range(len(first))]

            def _chain(first_row=first, rest=reader):
                yield first_row
                yield from rest

            body = _chain()
        return _clean_rows(header, body, policy)


def write_csv(
    dataset: Dataset,
    path: str,
    label_column: str = "Label",
    label_names: tuple[str, str] = ("BENIGN", "Syn"),
) -> None:
    """Write a Dataset in the same CSV format load_csv reads.

    Floats are rendered with repr so values round-trip exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(dataset.feature_names) + [label_column])
        labels = [label_names[int(v)] for v in dataset.y]
        for row, label in zip(dataset.X.tolist(), labels):
            writer.writerow([repr(v) for v in row] + [label])


def fit_scaler(X: np.ndarray) -> ScalerParams:
    """Column means and population standard deviations (divide by n)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise DataError("cannot fit scaler on an empty matrix")
    if not np.isfinite(X).all():
        raise DataError("cannot fit scaler on non-finite values")
    return ScalerParams(means=X.mean(axis=0), stds=X.std(axis=0))


def apply_scaler(X: np.ndarray, params: ScalerParams) -> np.ndarray:
    """Standardize columns; zero-std columns map to all zeros."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(params.means):
        raise DataError(
            f"matrix has {X.shape[1] if X.ndim == 2 else 'invalid'} columns, "
            f"scaler expects {len(params.means)}"
        )
    safe = np.where(params.stds == 0.0, 1.0, params.stds)
    out = (X - params.means) / safe
    out[:, params.stds == 0.0] = 0.0
    return out


def train_test_split(
    dataset: Dataset, test_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Stratified split; per-class test counts are round(count * fraction).

    Counts are clamped so both classes appear on both sides. Deterministic
    for a fixed seed; the two parts partition the rows exactly.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must lie strictly between 0 and 1")
    neg, pos = dataset.class_counts()
    if neg < 2 or pos < 2:
        raise DataError("each class needs at least 2 rows to split")
    rng = np.random.default_rng(_nonneg(seed))
    test_parts = []
    train_parts = []
    for cls in (0, 1):
        idx = np.flatnonzero(dataset.y == cls)
        rng.shuffle(idx)
        n_test = int(round(len(idx) * test_fraction))
        n_test = min(max(n_test, 1), len(idx) - 1)
        test_parts.append(idx[:n_test])
        train_parts.append(idx[n_test:])
    test_idx = np.sort(np.concatenate(test_parts))
    train_idx = np.sort(np.concatenate(train_parts))
    return _take(dataset, train_idx), _take(dataset, test_idx)


def _take(dataset: Dataset, idx: np.ndarray) -> Dataset:
    return Dataset(
        X=dataset.X[idx],
        y=dataset.y[idx],
        feature_names=list(dataset.feature_names),
    )


def _nonneg(seed: int) -> int:
    return int(seed) & ((1 << 64) - 1)
