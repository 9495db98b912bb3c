"""k-nearest-neighbour point regressor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError


@dataclass(frozen=True)
class KnnModel:
    kind: str
    feature_names: tuple[str, ...]
    k: int
    train_x: np.ndarray  # standardized
    train_y: np.ndarray
    mu: np.ndarray
    sd: np.ndarray

    def predict(self, rows: np.ndarray) -> np.ndarray:
        Q = np.asarray(rows, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.mu.shape[0]:
            raise ShapeError(
                f"query width {Q.shape} does not match {self.mu.shape[0]} features"
            )
        Qs = (Q - self.mu) / self.sd
        out = np.empty(Q.shape[0])
        # block the distance matrix so memory stays bounded
        for lo in range(0, Q.shape[0], 256):
            block = Qs[lo : lo + 256]
            d2 = (
                np.sum(block * block, axis=1)[:, None]
                - 2.0 * block @ self.train_x.T
                + np.sum(self.train_x * self.train_x, axis=1)[None, :]
            )
            # stable sort keeps the smallest training index on distance ties
            order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            out[lo : lo + 256] = self.train_y[order].mean(axis=1)
        return out


def fit_knn(X: np.ndarray, y: np.ndarray, feature_names, k: int) -> KnnModel:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    A = np.asarray(X, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    n = A.shape[0]
    if k > n:
        raise ConfigError(f"k={k} exceeds {n} training rows")
    mu = A.mean(axis=0)
    sd = A.std(axis=0)
    sd = np.where(sd > 0.0, sd, 1.0)
    return KnnModel(
        kind="knn",
        feature_names=tuple(feature_names),
        k=int(k),
        train_x=(A - mu) / sd,
        train_y=t.copy(),
        mu=mu,
        sd=sd,
    )
