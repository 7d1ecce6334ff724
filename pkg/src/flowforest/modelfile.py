"""Versioned binary model file: save_model / load_model.

Layout (all integers little-endian, floats IEEE-754 binary64):

    magic      8 bytes  b"FFRFMDL1"
    version    u32
    n_features u32
    n_estimators u32
    max_depth  u32
    feature_mode u8     (0 = sqrt, 1 = log2, 2 = all)
    min_samples_split u32
    seed       u64
    n_trees    u32      (equals n_estimators)
    per tree:
        n_nodes u32
        feature   i32[n_nodes]   (preorder; -1 marks a leaf)
        threshold f64[n_nodes]   (0.0 for leaves)
        left      i32[n_nodes]   (preorder child index; -1 for leaves)
        right     i32[n_nodes]
        count_neg u64[n_nodes]   (leaf class counts; 0 for internal)
        count_pos u64[n_nodes]
    crc32      u32      (zlib crc32 of everything after the magic)

A load either returns a fully validated model or raises ModelFormatError;
no partial model is ever produced.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import ModelFormatError
from .forest import (
    FeatureMode,
    ForestHyperparams,
    ForestModel,
    Internal,
    Leaf,
    TreeNode,
)

MAGIC = b"FFRFMDL1"
VERSION = 1

_MODE_CODES = {FeatureMode.SQRT: 0, FeatureMode.LOG2: 1, FeatureMode.ALL: 2}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}

_HEADER = struct.Struct("<IIIIBIQI")  # version .. n_trees


def _tree_arrays(root: TreeNode):
    feats, thrs, lefts, rights, negs, poss = [], [], [], [], [], []

    def visit(node):
        i = len(feats)
        if isinstance(node, Leaf):
            neg, pos = node.class_counts
            feats.append(-1)
            thrs.append(0.0)
            lefts.append(-1)
            rights.append(-1)
            negs.append(neg)
            poss.append(pos)
            return i
        feats.append(node.feature_index)
        thrs.append(node.threshold)
        lefts.append(-1)
        rights.append(-1)
        negs.append(0)
        poss.append(0)
        lefts[i] = visit(node.left)
        rights[i] = visit(node.right)
        return i

    visit(root)
    return (
        np.asarray(feats, dtype="<i4"),
        np.asarray(thrs, dtype="<f8"),
        np.asarray(lefts, dtype="<i4"),
        np.asarray(rights, dtype="<i4"),
        np.asarray(negs, dtype="<u8"),
        np.asarray(poss, dtype="<u8"),
    )


def save_model(model: ForestModel, path: str) -> None:
    """Write a trained forest to a self-describing binary file."""
    hp = model.hyperparams
    parts = [
        _HEADER.pack(
            VERSION,
            model.n_features_trained,
            hp.n_estimators,
            hp.max_depth,
            _MODE_CODES[hp.feature_mode],
            hp.min_samples_split,
            int(hp.seed) & ((1 << 64) - 1),
            len(model.trees),
        )
    ]
    for tree in model.trees:
        arrays = _tree_arrays(tree)
        parts.append(struct.pack("<I", len(arrays[0])))
        parts.extend(a.tobytes() for a in arrays)
    payload = b"".join(parts)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


class _Reader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.pos = offset

    def take(self, size: int) -> memoryview:
        end = self.pos + size
        if end > len(self.data):
            raise ModelFormatError("truncated model file")
        view = memoryview(self.data)[self.pos:end]
        self.pos = end
        return view

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def array(self, dtype: str, count: int) -> np.ndarray:
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(item * count), dtype=dtype)


def _build_tree(feats, thrs, lefts, rights, negs, poss, index, depth, max_depth):
    n = len(feats)
    if index < 0 or index >= n:
        raise ModelFormatError("corrupt model file (node index out of range)")
    if depth > max_depth:
        raise ModelFormatError("corrupt model file (tree deeper than max_depth)")
    f = int(feats[index])
    if f < 0:
        neg = int(negs[index])
        pos = int(poss[index])
        if neg + pos < 1:
            raise ModelFormatError("corrupt model file (empty leaf)")
        return Leaf((neg, pos))
    li = int(lefts[index])
    ri = int(rights[index])
    if li <= index or ri <= index:
        raise ModelFormatError("corrupt model file (child does not follow parent)")
    return Internal(
        f,
        float(thrs[index]),
        _build_tree(feats, thrs, lefts, rights, negs, poss, li, depth + 1, max_depth),
        _build_tree(feats, thrs, lefts, rights, negs, poss, ri, depth + 1, max_depth),
    )


def load_model(path: str) -> ForestModel:
    """Read a model file back; inverse of save_model."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file")
    if len(data) < len(MAGIC) + _HEADER.size + 4:
        raise ModelFormatError("truncated model file")
    payload = data[len(MAGIC):-4]
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise ModelFormatError("corrupt model file (checksum mismatch)")

    reader = _Reader(data, len(MAGIC))
    (
        version,
        n_features,
        n_estimators,
        max_depth,
        mode_code,
        min_samples_split,
        seed,
        n_trees,
    ) = _HEADER.unpack(reader.take(_HEADER.size))
    if version != VERSION:
        raise ModelFormatError(
            f"unsupported model file version {version} (expected {VERSION})"
        )
    if mode_code not in _CODE_MODES:
        raise ModelFormatError("corrupt model file (unknown feature mode)")
    if n_trees != n_estimators:
        raise ModelFormatError("corrupt model file (tree count mismatch)")

    hp = ForestHyperparams(
        n_estimators=n_estimators,
        max_depth=max_depth,
        feature_mode=_CODE_MODES[mode_code],
        seed=seed,
        min_samples_split=min_samples_split,
    )
    trees = []
    for _ in range(n_trees):
        n_nodes = reader.u32()
        if n_nodes < 1:
            raise ModelFormatError("corrupt model file (empty tree)")
        feats = reader.array("<i4", n_nodes)
        thrs = reader.array("<f8", n_nodes)
        lefts = reader.array("<i4", n_nodes)
        rights = reader.array("<i4", n_nodes)
        negs = reader.array("<u8", n_nodes)
        poss = reader.array("<u8", n_nodes)
        if (feats >= n_features).any():
            raise ModelFormatError("corrupt model file (feature index out of range)")
        trees.append(
            _build_tree(feats, thrs, lefts, rights, negs, poss, 0, 0, max_depth)
        )
    if reader.pos != len(data) - 4:
        raise ModelFormatError("corrupt model file (trailing bytes)")
    return ForestModel(trees=trees, hyperparams=hp, n_features_trained=n_features)
