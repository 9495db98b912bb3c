"""Flat-array regression tree built on the split kernels.

Trees are stored as parallel arrays so routing stays in the compiled kernel
and models serialize as plain arrays. Leaves can keep their training row
indices, which the quantile forest needs to weight training targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ConfigError, ShapeError


@dataclass(frozen=True)
class Tree:
    """One fitted tree. ``feature < 0`` marks a leaf; ``x <= threshold``
    routes left. ``value`` holds the training-target mean of every node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_members: tuple[np.ndarray, ...] | None = None

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def leaf_ids(self, X: np.ndarray) -> np.ndarray:
        A = np.ascontiguousarray(X, dtype=np.float64)
        if A.ndim != 2:
            raise ShapeError("tree input must be 2-d")
        return kernels.apply_tree(A, self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.leaf_ids(X)]


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    max_depth: int,
    min_leaf: int,
    n_feats: int | None = None,
    rng: np.random.Generator | None = None,
    keep_members: bool = False,
) -> Tree:
    """Grow a tree depth-first. A node becomes a leaf at ``max_depth``, when
    it has fewer than ``2 * min_leaf`` rows, when its targets are constant,
    or when no split separates feature values. ``n_feats`` columns are drawn
    per node without replacement when smaller than the width.
    """
    A = np.ascontiguousarray(X, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    if A.ndim != 2 or t.ndim != 1 or A.shape[0] != t.shape[0]:
        raise ShapeError("X must be 2-d and y 1-d with matching rows")
    n, d = A.shape
    if n == 0:
        raise ConfigError("cannot grow a tree on zero rows")
    if max_depth < 0:
        raise ConfigError(f"max_depth must be >= 0, got {max_depth}")
    if min_leaf < 1:
        raise ConfigError(f"min_leaf must be >= 1, got {min_leaf}")
    if n_feats is not None and not 1 <= n_feats:
        raise ConfigError(f"n_feats must be >= 1, got {n_feats}")
    subsampling = n_feats is not None and n_feats < d
    if subsampling and rng is None:
        raise ConfigError("feature subsampling needs an explicit rng")

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    members: list[np.ndarray | None] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        members.append(None)
        return len(feature) - 1

    root = new_node()
    stack: list[tuple[int, np.ndarray, int]] = [(root, np.arange(n, dtype=np.intp), 0)]
    while stack:
        nid, idx, depth = stack.pop()
        ysub = t[idx]
        value[nid] = float(ysub.mean())
        is_leaf = (
            depth >= max_depth
            or idx.size < 2 * min_leaf
            or bool(np.all(ysub == ysub[0]))
        )
        if not is_leaf:
            if subsampling:
                feats = np.sort(rng.choice(d, size=n_feats, replace=False)).astype(np.intp)
            else:
                feats = np.arange(d, dtype=np.intp)
            sub = np.ascontiguousarray(A[np.ix_(idx, feats)])
            fpos, thr, _ = kernels.best_split(sub, np.ascontiguousarray(ysub), min_leaf)
            if fpos < 0:
                is_leaf = True
            else:
                col = int(feats[fpos])
                go_left = A[idx, col] <= thr
                feature[nid] = col
                threshold[nid] = float(thr)
                lid = new_node()
                rid = new_node()
                left[nid] = lid
                right[nid] = rid
                # push right first so the left branch is grown next
                stack.append((rid, idx[~go_left], depth + 1))
                stack.append((lid, idx[go_left], depth + 1))
        if is_leaf and keep_members:
            members[nid] = np.asarray(idx, dtype=np.int64)

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        leaf_members=tuple(
            m if m is not None else np.zeros(0, dtype=np.int64) for m in members
        )
        if keep_members
        else None,
    )
