"""Tree ensembles: regression forest, gradient boosting, quantile forest."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from ..quantile import weighted_quantile
from ._tree import Tree, build_tree

FOREST_DEFAULTS = {"trees": 100, "depth": 12, "min_leaf": 1, "bootstrap": True}
BOOST_DEFAULTS = {"trees": 200, "rate": 0.05, "depth": 4, "min_leaf": 5}
QRF_DEFAULTS = {"trees": 100, "depth": 8, "min_leaf": 5, "subsample": 1.0}


def _check_width(feature_names, rows) -> np.ndarray:
    X = np.ascontiguousarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(feature_names):
        raise ShapeError(
            f"row width {X.shape} does not match {len(feature_names)} fitted features"
        )
    return X


@dataclass(frozen=True)
class ForestModel:
    kind: str
    feature_names: tuple[str, ...]
    trees: tuple[Tree, ...]

    def predict(self, rows: np.ndarray) -> np.ndarray:
        X = _check_width(self.feature_names, rows)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)


@dataclass(frozen=True)
class BoostModel:
    kind: str
    feature_names: tuple[str, ...]
    init: float
    rate: float
    trees: tuple[Tree, ...]

    def predict(self, rows: np.ndarray) -> np.ndarray:
        X = _check_width(self.feature_names, rows)
        acc = np.full(X.shape[0], self.init)
        for tree in self.trees:
            acc += self.rate * tree.predict(X)
        return acc


@dataclass(frozen=True)
class QRFModel:
    """Quantile forest: leaves keep training row indices so any conditional
    quantile can be read off the pooled, weighted leaf targets."""

    kind: str
    feature_names: tuple[str, ...]
    trees: tuple[Tree, ...]
    train_y: np.ndarray
    seed: int

    def predict(self, rows: np.ndarray) -> np.ndarray:
        X = _check_width(self.feature_names, rows)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)


def fit_forest(X, y, feature_names, params: dict, seed: int) -> ForestModel:
    p = {**FOREST_DEFAULTS, **params}
    trees, depth, min_leaf = int(p["trees"]), int(p["depth"]), int(p["min_leaf"])
    if trees < 1:
        raise ConfigError(f"trees must be >= 1, got {trees}")
    A = np.ascontiguousarray(X, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    n, d = A.shape
    # ceil(sqrt(d)) candidate features per split
    n_feats = math.isqrt(d - 1) + 1 if d > 1 else None
    children = np.random.SeedSequence(seed).spawn(trees)
    grown = []
    for b in range(trees):
        rng = np.random.default_rng(children[b])
        if p["bootstrap"]:
            idx = rng.integers(0, n, n)
            Xb, yb = A[idx], t[idx]
        else:
            Xb, yb = A, t
        grown.append(
            build_tree(
                Xb, yb, max_depth=depth, min_leaf=min_leaf, n_feats=n_feats, rng=rng
            )
        )
    return ForestModel(kind="forest", feature_names=tuple(feature_names), trees=tuple(grown))


def fit_boost(X, y, feature_names, params: dict, seed: int) -> BoostModel:
    p = {**BOOST_DEFAULTS, **params}
    trees, depth, min_leaf = int(p["trees"]), int(p["depth"]), int(p["min_leaf"])
    rate = float(p["rate"])
    if trees < 1:
        raise ConfigError(f"trees must be >= 1, got {trees}")
    if rate < 0.0:
        raise ConfigError(f"rate must be >= 0, got {rate}")
    A = np.ascontiguousarray(X, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    init = float(t.mean())
    current = np.full(t.shape[0], init)
    grown = []
    for _ in range(trees):
        tree = build_tree(A, t - current, max_depth=depth, min_leaf=min_leaf)
        current += rate * tree.predict(A)
        grown.append(tree)
    return BoostModel(
        kind="boost",
        feature_names=tuple(feature_names),
        init=init,
        rate=rate,
        trees=tuple(grown),
    )


def fit_qrf(X, y, feature_names, params: dict, seed: int) -> QRFModel:
    p = {**QRF_DEFAULTS, **params}
    trees, depth, min_leaf = int(p["trees"]), int(p["depth"]), int(p["min_leaf"])
    subsample = float(p["subsample"])
    if trees < 1:
        raise ConfigError(f"trees must be >= 1, got {trees}")
    if not 0.0 < subsample <= 1.0:
        raise ConfigError(f"subsample must be in (0, 1], got {subsample}")
    A = np.ascontiguousarray(X, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    n = A.shape[0]
    if min_leaf > n:
        raise ConfigError(f"min_leaf={min_leaf} exceeds {n} training rows")
    m = max(1, int(round(subsample * n)))
    children = np.random.SeedSequence(seed).spawn(trees)
    grown = []
    for b in range(trees):
        rng = np.random.default_rng(children[b])
        if m < n:
            idx = np.sort(rng.choice(n, size=m, replace=False))
        else:
            idx = np.arange(n)
        tree = build_tree(
            A[idx], t[idx], max_depth=depth, min_leaf=min_leaf, keep_members=True
        )
        # leaf members are local to the subsample; remap to original rows
        members = tuple(idx[mm].astype(np.int64) for mm in tree.leaf_members)
        grown.append(
            Tree(
                feature=tree.feature,
                threshold=tree.threshold,
                left=tree.left,
                right=tree.right,
                value=tree.value,
                leaf_members=members,
            )
        )
    return QRFModel(
        kind="qrf",
        feature_names=tuple(feature_names),
        trees=tuple(grown),
        train_y=t.copy(),
        seed=int(seed),
    )


def qrf_weights(model: QRFModel, rows: np.ndarray) -> np.ndarray:
    """Per-query weights over training rows: each tree spreads 1/trees evenly
    across the members of the leaf the query lands in."""
    X = _check_width(model.feature_names, rows)
    B = len(model.trees)
    n = model.train_y.shape[0]
    W = np.zeros((X.shape[0], n))
    for tree in model.trees:
        leaves = tree.leaf_ids(X)
        for r, leaf in enumerate(leaves):
            members = tree.leaf_members[int(leaf)]
            W[r, members] += 1.0 / (B * members.size)
    return W


def qrf_quantile_many(
    model: QRFModel, rows: np.ndarray, levels, convention: str = "conformal"
) -> np.ndarray:
    """Conditional quantiles at several levels per query row; shape
    (rows, levels). Levels are evaluated on one shared weight vector per row,
    so results are monotone in the level by construction."""
    W = qrf_weights(model, rows)
    ps = [float(p) for p in levels]
    out = np.empty((W.shape[0], len(ps)))
    for r in range(W.shape[0]):
        for c, p in enumerate(ps):
            out[r, c] = weighted_quantile(model.train_y, W[r], p, convention)
    return out


def qrf_quantile(
    model: QRFModel, rows: np.ndarray, p: float, convention: str = "conformal"
) -> np.ndarray:
    """Conditional p-quantile per query row."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return qrf_quantile_many(model, X, [p], convention)[:, 0]
