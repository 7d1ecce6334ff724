"""From-scratch CART trees and a bootstrap-aggregated random forest.

Binary classification only (benign = 0, attack = 1). Split quality is
Gini impurity; candidate thresholds are midpoints between consecutive
distinct sorted values; ties resolve to the lowest feature index, then
the lowest threshold. Training is deterministic for a fixed seed
regardless of thread count: every tree consumes its own RNG stream
derived from (seed, tree_index).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError

_SEED_MASK = (1 << 64) - 1

# features per evaluation chunk are sized so the scan temporaries stay
# cache-resident on large nodes
_CHUNK_ELEMS = 1 << 18


def _nonneg(value: int) -> int:
    return int(value) & _SEED_MASK


def derive_seed(seed: int, index: int) -> int:
    """Stable 64-bit child seed for stream (seed, index)."""
    ss = np.random.SeedSequence([_nonneg(seed), _nonneg(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """The RNG stream a given tree consumes (bootstrap draw first)."""
    return np.random.default_rng(
        np.random.SeedSequence([_nonneg(seed), _nonneg(tree_index)])
    )


def bootstrap_indices(seed: int, tree_index: int, n_rows: int) -> np.ndarray:
    """Bootstrap sample (size n_rows, with replacement) for one tree."""
    return tree_rng(seed, tree_index).integers(0, n_rows, size=n_rows)


class FeatureMode(Enum):
    """Size rule for the random candidate-feature subset drawn per split."""

    SQRT = "sqrt"
    LOG2 = "log2"
    ALL = "all"

    def candidate_count(self, n_features: int) -> int:
        if n_features < 1:
            raise ConfigError("n_features must be positive")
        if self is FeatureMode.SQRT:
            return max(1, math.isqrt(n_features))
        if self is FeatureMode.LOG2:
            return max(1, n_features.bit_length() - 1)
        return n_features

    @classmethod
    def parse(cls, text: str) -> "FeatureMode":
        key = text.strip().lower()
        if key == "none":  # alias: consider every feature
            key = "all"
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(
                f"unknown feature mode {text!r} (expected sqrt, log2, or all)"
            ) from None


@dataclass(frozen=True)
class ForestHyperparams:
    n_estimators: int
    max_depth: int
    feature_mode: FeatureMode
    seed: int
    min_samples_split: int = 2

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if not isinstance(self.feature_mode, FeatureMode):
            raise ConfigError("feature_mode must be a FeatureMode")
        # canonical unsigned form so seeds survive serialization exactly
        object.__setattr__(self, "seed", _nonneg(self.seed))

    def to_dict(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "feature_mode": self.feature_mode.value,
            "seed": self.seed,
            "min_samples_split": self.min_samples_split,
        }


@dataclass
class Leaf:
    """Terminal node holding (benign, attack) sample counts."""

    class_counts: tuple[int, int]

    @property
    def majority(self) -> int:
        neg, pos = self.class_counts
        return 1 if pos > neg else 0  # tie -> benign


@dataclass
class Internal:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Internal, Leaf]


def gini(class_counts: tuple[int, int]) -> float:
    """Gini impurity 1 - sum(p_i^2) of a two-class count pair."""
    neg, pos = class_counts
    if neg < 0 or pos < 0:
        raise DataError("class counts must be non-negative")
    total = neg + pos
    if total == 0:
        raise DataError("gini undefined for an empty node")
    p1 = pos / total
    p0 = neg / total
    return 1.0 - p1 * p1 - p0 * p0


def _scan_chunk(vals, w, pw):
    """Best boundary in one (k, m) chunk of sorted candidate columns.

    Returns (row, col, weighted_gini) for the first minimum in row-major
    order, or None when no column has a value boundary. The arithmetic
    shape below is the reference definition other code paths must match
    bit for bit.
    """
    m = vals.shape[1]
    cw = np.cumsum(w, axis=1)
    cp = np.cumsum(pw, axis=1)
    total_w = cw[0, -1]
    total_p = cp[0, -1]
    nl = cw[:, :-1]
    pl = cp[:, :-1]
    nr = total_w - nl
    pr = total_p - pl
    p1l = pl / nl
    p0l = (nl - pl) / nl
    gl = 1.0 - p1l * p1l - p0l * p0l
    p1r = pr / nr
    p0r = (nr - pr) / nr
    gr = 1.0 - p1r * p1r - p0r * p0r
    wg = (nl * gl + nr * gr) / total_w
    np.copyto(wg, np.inf, where=vals[:, 1:] == vals[:, :-1])
    flat = int(np.argmin(wg))
    row, col = divmod(flat, m - 1)
    best = wg[row, col]
    if not np.isfinite(best):
        return None
    return row, col, float(best)


def _midpoint(lo: float, hi: float) -> float:
    threshold = (lo + hi) / 2.0
    if threshold == hi:  # midpoint rounded up between adjacent floats
        threshold = lo
    return threshold


class _Workspace:
    """Reusable scan buffers sized for one tree's root; avoids per-node
    allocation churn on large nodes."""

    __slots__ = ("vals", "w", "pw", "cw", "cp", "ia", "ib", "fa", "fb", "fc", "bmask")

    def __init__(self, m: int):
        m = max(m, 2)
        self.vals = np.empty(m, dtype=np.float64)
        self.w = np.empty(m, dtype=np.int64)
        self.pw = np.empty(m, dtype=np.int64)
        self.cw = np.empty(m, dtype=np.int64)
        self.cp = np.empty(m, dtype=np.int64)
        self.ia = np.empty(m - 1, dtype=np.int64)
        self.ib = np.empty(m - 1, dtype=np.int64)
        self.fa = np.empty(m - 1, dtype=np.float64)
        self.fb = np.empty(m - 1, dtype=np.float64)
        self.fc = np.empty(m - 1, dtype=np.float64)
        self.bmask = np.empty(m - 1, dtype=bool)


def _scan_feature(col, sorted_idx, w_row, pos_w, ws: _Workspace):
    """Single-feature scan into reusable buffers.

    Bit-identical to one row of _scan_chunk: every elementwise operation
    appears in the same order and shape, only the storage is reused.
    """
    m = sorted_idx.shape[0]
    vals = ws.vals[:m]
    np.take(col, sorted_idx, out=vals)
    if vals[0] == vals[m - 1]:
        return None  # constant column, no boundary
    w = ws.w[:m]
    pw = ws.pw[:m]
    np.take(w_row, sorted_idx, out=w)
    np.take(pos_w, sorted_idx, out=pw)
    cw = np.cumsum(w, out=ws.cw[:m])
    cp = np.cumsum(pw, out=ws.cp[:m])
    total_w = cw[m - 1]
    total_p = cp[m - 1]
    nl = cw[: m - 1]
    pl = cp[: m - 1]
    ia = ws.ia[: m - 1]
    ib = ws.ib[: m - 1]
    fa = ws.fa[: m - 1]
    fb = ws.fb[: m - 1]
    fc = ws.fc[: m - 1]
    # left child: gl = 1 - p1l^2 - p0l^2
    np.subtract(nl, pl, out=ib)
    p1l = np.divide(pl, nl, out=fa)
    p0l = np.divide(ib, nl, out=fb)
    np.multiply(p1l, p1l, out=fa)
    np.subtract(1.0, fa, out=fa)
    np.multiply(p0l, p0l, out=fb)
    gl = np.subtract(fa, fb, out=fa)
    # right child on the complements
    nr = np.subtract(total_w, nl, out=ia)
    pr = np.subtract(total_p, pl, out=ib)
    p1r = np.divide(pr, nr, out=fb)
    np.subtract(nr, pr, out=ib)
    p0r = np.divide(ib, nr, out=fc)
    np.multiply(p1r, p1r, out=fb)
    np.subtract(1.0, fb, out=fb)
    np.multiply(p0r, p0r, out=fc)
    gr = np.subtract(fb, fc, out=fb)
    # wg = (nl*gl + nr*gr) / total_w
    np.multiply(nl, gl, out=fa)
    np.multiply(nr, gr, out=fb)
    np.add(fa, fb, out=fa)
    wg = np.divide(fa, total_w, out=fa)
    same = np.equal(vals[1:], vals[: m - 1], out=ws.bmask[: m - 1])
    np.copyto(wg, np.inf, where=same)
    i = int(np.argmin(wg))
    best = wg[i]
    if not np.isfinite(best):
        return None
    return float(best), float(vals[i]), float(vals[i + 1])


def _best_over_features(Xf, w_row, pos_w, sorted_rows, feature_ids, ws=None):
    """Best (feature, threshold, weighted_gini) over sorted candidates.

    sorted_rows is (k, m): row indices ordered by the matching feature in
    feature_ids (ascending feature order). Ties keep the lowest feature,
    then the lowest threshold. Returns None when every candidate is
    constant across the node.
    """
    k, m = sorted_rows.shape
    if m < 2:
        return None
    if k * m <= _CHUNK_ELEMS or ws is None:
        # small node: one 2-d gather and scan call beats per-column work
        vals = Xf[sorted_rows, np.asarray(feature_ids)[:, None]]
        found = _scan_chunk(vals, w_row[sorted_rows], pos_w[sorted_rows])
        if found is None:
            return None
        row, col, wg = found
        threshold = _midpoint(float(vals[row, col]), float(vals[row, col + 1]))
        return int(feature_ids[row]), threshold, wg
    best = None  # (wg, feature_pos, lo, hi)
    for j in range(k):
        found = _scan_feature(Xf[:, feature_ids[j]], sorted_rows[j], w_row, pos_w, ws)
        if found is None:
            continue
        wg, lo, hi = found
        if best is None or wg < best[0]:
            best = (wg, j, lo, hi)
    if best is None:
        return None
    wg, pos, lo, hi = best
    return int(feature_ids[pos]), _midpoint(lo, hi), wg


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    row_indices: Sequence[int],
    candidate_features: Sequence[int],
) -> Optional[tuple[int, float, float]]:
    """Exhaustive best (feature, threshold, weighted_gini) over candidates.

    Duplicate row indices count with multiplicity. Returns None when no
    candidate feature admits a separating threshold.
    """
    if len(candidate_features) == 0:
        raise DataError("candidate feature set is empty")
    Xf = np.asfortranarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    rows, counts = np.unique(np.asarray(row_indices, dtype=np.intp), return_counts=True)
    if rows.size and (rows[0] < 0 or rows[-1] >= Xf.shape[0]):
        raise DataError("row index out of range")
    if rows.size == 0:
        return None
    w_row = np.zeros(Xf.shape[0], dtype=np.int64)
    w_row[rows] = counts
    pos_w = np.where(y == 1, w_row, 0)
    candidates = np.unique(np.asarray(candidate_features, dtype=np.intp))
    if candidates[0] < 0 or candidates[-1] >= Xf.shape[1]:
        raise DataError("candidate feature index out of range")
    sorted_rows = _sort_rows_by_features(Xf, rows, candidates)
    return _best_over_features(
        Xf, w_row, pos_w, sorted_rows, candidates, _Workspace(rows.size)
    )


def _sort_rows_by_features(Xf, rows, feature_ids) -> np.ndarray:
    """(k, m) row indices sorted per feature (per-node argsort path)."""
    sub = Xf[rows[:, None], feature_ids]  # (m, k)
    order = np.argsort(sub, axis=0).T  # (k, m)
    return rows[order]


def _draw_candidates(rng, n_features, mode) -> np.ndarray:
    k = mode.candidate_count(n_features)
    if k >= n_features:
        return np.arange(n_features)
    return np.sort(rng.choice(n_features, size=k, replace=False))


def _grow_subset(Xf, w_row, pos_w, rows, depth, hp, rng, n_features, ws):
    """Recursive growth with a per-node argsort over candidate columns."""
    total_w = int(w_row[rows].sum())
    total_p = int(pos_w[rows].sum())
    counts = (total_w - total_p, total_p)
    if (
        total_p == 0
        or total_p == total_w
        or depth >= hp.max_depth
        or total_w < hp.min_samples_split
    ):
        return Leaf(counts)
    candidates = _draw_candidates(rng, n_features, hp.feature_mode)
    sorted_rows = _sort_rows_by_features(Xf, rows, candidates)
    found = _best_over_features(Xf, w_row, pos_w, sorted_rows, candidates, ws)
    del sorted_rows
    if found is None:
        return Leaf(counts)
    feature, threshold, _ = found
    go_left = np.take(Xf[:, feature], rows) <= threshold
    left_rows = rows[go_left]
    right_rows = rows[~go_left]
    del go_left
    left = _grow_subset(Xf, w_row, pos_w, left_rows, depth + 1, hp, rng, n_features, ws)
    right = _grow_subset(Xf, w_row, pos_w, right_rows, depth + 1, hp, rng, n_features, ws)
    return Internal(feature, threshold, left, right)


def _grow_presorted(Xf, w_row, pos_w, sorted_rows, depth, hp, feature_ids, scratch, ws):
    """Recursive growth reusing per-feature sorted row lists (ALL mode).

    sorted_rows is (d, m): for each feature, the node's rows ordered by
    that feature's value. Children are built by stable filtering, so no
    re-sorting happens below the root.
    """
    rows = sorted_rows[0]
    total_w = int(w_row[rows].sum())
    total_p = int(pos_w[rows].sum())
    counts = (total_w - total_p, total_p)
    if (
        total_p == 0
        or total_p == total_w
        or depth >= hp.max_depth
        or total_w < hp.min_samples_split
    ):
        return Leaf(counts)
    found = _best_over_features(Xf, w_row, pos_w, sorted_rows, feature_ids, ws)
    if found is None:
        return Leaf(counts)
    feature, threshold, _ = found
    d = sorted_rows.shape[0]
    sel = np.take(Xf[:, feature], rows) <= threshold
    left_ids = rows[sel]
    scratch[left_ids] = True
    mask = scratch[sorted_rows]
    m_left = int(left_ids.shape[0])
    left_sorted = sorted_rows[mask].reshape(d, m_left)
    right_sorted = sorted_rows[~mask].reshape(d, sorted_rows.shape[1] - m_left)
    scratch[left_ids] = False
    del mask, sel, rows, left_ids, sorted_rows
    left = _grow_presorted(
        Xf, w_row, pos_w, left_sorted, depth + 1, hp, feature_ids, scratch, ws
    )
    del left_sorted
    right = _grow_presorted(
        Xf, w_row, pos_w, right_sorted, depth + 1, hp, feature_ids, scratch, ws
    )
    return Internal(feature, threshold, left, right)


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    row_indices: Sequence[int],
    hyperparams: ForestHyperparams,
    rng: Optional[np.random.Generator] = None,
) -> TreeNode:
    """Grow one CART tree on the given rows (duplicates = multiplicity).

    A fresh candidate-feature subset of FeatureMode size is drawn without
    replacement at every node attempt; ALL mode uses every feature and
    consumes no randomness.
    """
    Xf = np.asfortranarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    idx = np.asarray(row_indices, dtype=np.intp)
    if idx.size == 0:
        raise DataError("row_indices is empty")
    rows, counts = np.unique(idx, return_counts=True)
    if rows[0] < 0 or rows[-1] >= Xf.shape[0]:
        raise DataError("row index out of range")
    w_row = np.zeros(Xf.shape[0], dtype=np.int64)
    w_row[rows] = counts
    pos_w = np.where(y == 1, w_row, 0)
    if rng is None:
        rng = np.random.default_rng(_nonneg(hyperparams.seed))
    return _grow_subset(
        Xf, w_row, pos_w, rows, 0, hyperparams, rng, Xf.shape[1],
        _Workspace(rows.size),
    )


@dataclass
class _FlatTree:
    """Array form of one tree for vectorized traversal.

    Leaves self-loop (left == right == self, threshold = +inf) so a batch
    of rows can be advanced a fixed number of levels branch-free.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_label: np.ndarray
    depth: int


def _flatten(root: TreeNode) -> _FlatTree:
    feats: list[int] = []
    thrs: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    labels: list[int] = []
    max_depth = 0

    def visit(node: TreeNode, depth: int) -> int:
        nonlocal max_depth
        i = len(feats)
        if isinstance(node, Leaf):
            feats.append(0)
            thrs.append(np.inf)
            lefts.append(i)
            rights.append(i)
            labels.append(node.majority)
            max_depth = max(max_depth, depth)
            return i
        feats.append(node.feature_index)
        thrs.append(node.threshold)
        lefts.append(-1)
        rights.append(-1)
        labels.append(-1)
        lefts[i] = visit(node.left, depth + 1)
        rights[i] = visit(node.right, depth + 1)
        return i

    visit(root, 0)
    return _FlatTree(
        feature=np.asarray(feats, dtype=np.int32),
        threshold=np.asarray(thrs, dtype=np.float64),
        left=np.asarray(lefts, dtype=np.int32),
        right=np.asarray(rights, dtype=np.int32),
        leaf_label=np.asarray(labels, dtype=np.int8),
        depth=max_depth,
    )


def tree_depth(root: TreeNode) -> int:
    """Longest root-to-leaf path length (edges)."""
    if isinstance(root, Leaf):
        return 0
    return 1 + max(tree_depth(root.left), tree_depth(root.right))


@dataclass
class ForestModel:
    """Trained ensemble; immutable once built."""

    trees: list[TreeNode]
    hyperparams: ForestHyperparams
    n_features_trained: int
    _flat: Optional[list[_FlatTree]] = field(default=None, repr=False, compare=False)

    def _flat_trees(self) -> list[_FlatTree]:
        if self._flat is None:
            self._flat = [_flatten(t) for t in self.trees]
        return self._flat

    def _check_input(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_trained:
            got = X.shape[1] if X.ndim == 2 else "invalid"
            raise DataError(
                f"input has {got} columns, model was trained on "
                f"{self.n_features_trained}"
            )
        return X

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        """Fraction of trees voting attack, per row (in [0, 1])."""
        X = self._check_input(X)
        n = X.shape[0]
        votes = np.zeros(n, dtype=np.int32)
        if n == 0:
            return votes.astype(np.float64)
        row_ids = np.arange(n)
        for ft in self._flat_trees():
            node = np.zeros(n, dtype=np.int32)
            for _ in range(ft.depth):
                go_left = X[row_ids, ft.feature[node]] <= ft.threshold[node]
                node = np.where(go_left, ft.left[node], ft.right[node])
            votes += ft.leaf_label[node]
        return votes / float(self.hyperparams.n_estimators)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Majority-vote labels; exact vote ties resolve to benign (0)."""
        return (self.predict_score(X) > 0.5).astype(np.int64)


def predict(model: ForestModel, X: np.ndarray) -> np.ndarray:
    return model.predict(X)


def predict_score(model: ForestModel, X: np.ndarray) -> np.ndarray:
    return model.predict_score(X)


def presort_columns(X: np.ndarray) -> np.ndarray:
    """(d, n) argsort of every column; reusable across trees of one fit."""
    X = np.asarray(X, dtype=np.float64)
    return np.argsort(X, axis=0).astype(np.int32).T


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    hp: ForestHyperparams,
    threads: int = 1,
    presorted: Optional[np.ndarray] = None,
) -> ForestModel:
    """Train n_estimators trees, each on its own bootstrap sample.

    Tree t draws from the stream (hp.seed, t), so results are identical
    for any thread count. ``presorted`` may carry presort_columns(X) to
    skip the shared sorting pass (ALL mode only).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("X and y shapes do not match")
    n, d = X.shape
    pos = int(np.sum(y == 1))
    if pos == 0 or pos == n:
        raise DataError("training labels contain a single class")

    Xf = np.asfortranarray(X)
    use_presorted = hp.feature_mode is FeatureMode.ALL and n >= 4096
    if use_presorted and presorted is None:
        presorted = presort_columns(Xf)
    all_features = np.arange(d)

    def build(t: int) -> TreeNode:
        rng = tree_rng(hp.seed, t)
        idx = rng.integers(0, n, size=n)
        rows, counts = np.unique(idx, return_counts=True)
        w_row = np.zeros(n, dtype=np.int64)
        w_row[rows] = counts
        pos_w = np.where(y == 1, w_row, 0)
        ws = _Workspace(rows.shape[0])
        if use_presorted:
            present = np.zeros(n, dtype=bool)
            present[rows] = True
            sorted_rows = presorted[present[presorted]].reshape(d, rows.shape[0])
            scratch = np.zeros(n, dtype=bool)
            return _grow_presorted(
                Xf, w_row, pos_w, sorted_rows, 0, hp, all_features, scratch, ws
            )
        return _grow_subset(Xf, w_row, pos_w, rows, 0, hp, rng, d, ws)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(build, range(hp.n_estimators)))
    else:
        trees = [build(t) for t in range(hp.n_estimators)]
    return ForestModel(trees=trees, hyperparams=hp, n_features_trained=d)
