"""Point learners and the quantile forest behind one registry.

``fit_point`` dispatches on the learner kind; every fitted model exposes
``predict`` and carries its feature names, so width mismatches fail loudly.
Models serialize to a versioned npz layout via ``save_model``/``load_model``.
"""

from __future__ import annotations

import numpy as np

from ..dataset import DesignMatrix
from ..errors import ConfigError, DataError, ShapeError
from ._tree import Tree
from .linear import LearModel, fit_lear, kkt_gradients
from .neighbors import KnnModel, fit_knn
from .trees import (
    BOOST_DEFAULTS,
    FOREST_DEFAULTS,
    QRF_DEFAULTS,
    BoostModel,
    ForestModel,
    QRFModel,
    fit_boost,
    fit_forest,
    qrf_quantile,
    qrf_quantile_many,
    qrf_weights,
)
from .trees import fit_qrf as _fit_qrf_arrays

POINT_KINDS = ("knn", "lear", "forest", "boost")

MODEL_FORMAT = "gridband-model-v1"

PointModel = KnnModel | LearModel | ForestModel | BoostModel


def fit_point(kind: str, data: DesignMatrix, params: dict | None, seed: int) -> PointModel:
    """Fit one point learner. ``params`` uses the config-file keys for the
    kind (``k``, ``lambda``, ``trees``, ``depth``, ...); omitted keys take
    the documented defaults."""
    if kind not in POINT_KINDS:
        raise ConfigError(f"unknown learner kind {kind!r}; expected one of {POINT_KINDS}")
    if data.n_rows == 0:
        raise ConfigError("cannot fit on an empty design")
    p = dict(params or {})
    if kind == "knn":
        return fit_knn(data.rows, data.targets, data.feature_names, int(p.get("k", 10)))
    if kind == "lear":
        lam = p.get("lambda")
        return fit_lear(data.rows, data.targets, data.feature_names, lam)
    if kind == "forest":
        return fit_forest(data.rows, data.targets, data.feature_names, p, seed)
    return fit_boost(data.rows, data.targets, data.feature_names, p, seed)


def predict_point(model: PointModel, rows) -> np.ndarray:
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("prediction rows must be 2-d")
    return model.predict(X)


def fit_qrf(data: DesignMatrix, params: dict | None, seed: int) -> QRFModel:
    if data.n_rows == 0:
        raise ConfigError("cannot fit on an empty design")
    return _fit_qrf_arrays(data.rows, data.targets, data.feature_names, dict(params or {}), seed)


def _pack_trees(trees: tuple[Tree, ...], with_members: bool) -> dict:
    node_offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    for b, tree in enumerate(trees):
        node_offsets[b + 1] = node_offsets[b] + tree.n_nodes
    out = {
        "node_offsets": node_offsets,
        "feature": np.concatenate([t.feature for t in trees]),
        "threshold": np.concatenate([t.threshold for t in trees]),
        "left": np.concatenate([t.left for t in trees]),
        "right": np.concatenate([t.right for t in trees]),
        "value": np.concatenate([t.value for t in trees]),
    }
    if with_members:
        chunks = [m for t in trees for m in t.leaf_members]
        sizes = np.asarray([c.size for c in chunks], dtype=np.int64)
        out["member_offsets"] = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        out["members"] = (
            np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
        )
    return out


def _unpack_trees(d: dict, with_members: bool) -> tuple[Tree, ...]:
    offs = d["node_offsets"]
    trees = []
    node_base = 0
    for b in range(offs.size - 1):
        lo, hi = int(offs[b]), int(offs[b + 1])
        members = None
        if with_members:
            mo = d["member_offsets"]
            members = tuple(
                d["members"][int(mo[node_base + j]) : int(mo[node_base + j + 1])]
                for j in range(hi - lo)
            )
        trees.append(
            Tree(
                feature=d["feature"][lo:hi],
                threshold=d["threshold"][lo:hi],
                left=d["left"][lo:hi],
                right=d["right"][lo:hi],
                value=d["value"][lo:hi],
                leaf_members=members,
            )
        )
        node_base += hi - lo
    return tuple(trees)


def save_model(model, path) -> None:
    """Write a fitted model as plain arrays under a versioned npz layout."""
    base = {
        "format": np.asarray(MODEL_FORMAT),
        "kind": np.asarray(model.kind),
        "feature_names": np.asarray(model.feature_names, dtype=np.str_),
    }
    if isinstance(model, KnnModel):
        base.update(
            k=np.int64(model.k),
            train_x=model.train_x,
            train_y=model.train_y,
            mu=model.mu,
            sd=model.sd,
        )
    elif isinstance(model, LearModel):
        base.update(coef=model.coef, intercept=np.float64(model.intercept), lam=np.float64(model.lam))
    elif isinstance(model, ForestModel):
        base.update(_pack_trees(model.trees, with_members=False))
    elif isinstance(model, BoostModel):
        base.update(
            init=np.float64(model.init),
            rate=np.float64(model.rate),
            **_pack_trees(model.trees, with_members=False),
        )
    elif isinstance(model, QRFModel):
        base.update(
            train_y=model.train_y,
            seed=np.int64(model.seed),
            **_pack_trees(model.trees, with_members=True),
        )
    else:
        raise ConfigError(f"cannot serialize model of type {type(model).__name__}")
    np.savez(path, **base)


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        d = {k: z[k] for k in z.files}
    fmt = str(d.get("format", ""))
    if fmt != MODEL_FORMAT:
        raise DataError(f"{path}: unsupported model format {fmt!r}")
    kind = str(d["kind"])
    names = tuple(str(s) for s in d["feature_names"])
    if kind == "knn":
        return KnnModel(
            kind=kind,
            feature_names=names,
            k=int(d["k"]),
            train_x=d["train_x"],
            train_y=d["train_y"],
            mu=d["mu"],
            sd=d["sd"],
        )
    if kind == "lear":
        return LearModel(
            kind=kind,
            feature_names=names,
            coef=d["coef"],
            intercept=float(d["intercept"]),
            lam=float(d["lam"]),
        )
    if kind == "forest":
        return ForestModel(kind=kind, feature_names=names, trees=_unpack_trees(d, False))
    if kind == "boost":
        return BoostModel(
            kind=kind,
            feature_names=names,
            init=float(d["init"]),
            rate=float(d["rate"]),
            trees=_unpack_trees(d, False),
        )
    if kind == "qrf":
        return QRFModel(
            kind=kind,
            feature_names=names,
            trees=_unpack_trees(d, True),
            train_y=d["train_y"],
            seed=int(d["seed"]),
        )
    raise DataError(f"{path}: unknown model kind {kind!r}")


__all__ = [
    "POINT_KINDS",
    "PointModel",
    "KnnModel",
    "LearModel",
    "ForestModel",
    "BoostModel",
    "QRFModel",
    "FOREST_DEFAULTS",
    "BOOST_DEFAULTS",
    "QRF_DEFAULTS",
    "fit_point",
    "predict_point",
    "fit_qrf",
    "qrf_quantile",
    "qrf_quantile_many",
    "qrf_weights",
    "kkt_gradients",
    "save_model",
    "load_model",
]
