"""LASSO autoregression: coordinate-descent lasso on the lagged design.

Features are standardized internally and coefficients de-standardized on the
way out. The penalty weight applies to the standardized objective
``sum (y - Xb)^2 + lam * sum |b|``; when no weight is given, a small grid is
scored on the trailing quarter of the training rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError

LAMBDA_GRID_FACTORS = (0.01, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class LearModel:
    kind: str
    feature_names: tuple[str, ...]
    coef: np.ndarray
    intercept: float
    lam: float

    def predict(self, rows: np.ndarray) -> np.ndarray:
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.coef.shape[0]:
            raise ShapeError(
                f"row width {X.shape} does not match {self.coef.shape[0]} features"
            )
        return X @ self.coef + self.intercept


def _cd_lasso(
    Xs: np.ndarray, yc: np.ndarray, lam: float, beta0: np.ndarray | None = None
) -> np.ndarray:
    """Coordinate descent on standardized features and centered targets.
    Converges when no coefficient moves more than 1e-11 relative to scale."""
    n, d = Xs.shape
    beta = np.zeros(d) if beta0 is None else beta0.copy()
    if d == 0:
        return beta
    colsq = np.einsum("ij,ij->j", Xs, Xs)
    r = yc - Xs @ beta
    half = 0.5 * lam
    for _ in range(2000):
        delta_max = 0.0
        for j in range(d):
            if colsq[j] <= 0.0:
                beta[j] = 0.0
                continue
            b_old = beta[j]
            rho = Xs[:, j] @ r + colsq[j] * b_old
            if rho > half:
                b_new = (rho - half) / colsq[j]
            elif rho < -half:
                b_new = (rho + half) / colsq[j]
            else:
                b_new = 0.0
            if b_new != b_old:
                r += Xs[:, j] * (b_old - b_new)
                beta[j] = b_new
                delta_max = max(delta_max, abs(b_new - b_old))
        if delta_max < 1e-11 * max(1.0, float(np.max(np.abs(beta)))):
            break
    return beta


def _sse(Xs: np.ndarray, yc: np.ndarray, beta: np.ndarray) -> float:
    r = yc - Xs @ beta
    return float(r @ r)


def fit_lear(X: np.ndarray, y: np.ndarray, feature_names, lam: float | None) -> LearModel:
    A = np.asarray(X, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    n, d = A.shape
    if lam is not None and lam < 0:
        raise ConfigError(f"lasso penalty must be >= 0, got {lam}")

    mu = A.mean(axis=0) if d else np.zeros(0)
    sd = A.std(axis=0) if d else np.zeros(0)
    sd_safe = np.where(sd > 0.0, sd, 1.0)
    Xs = (A - mu) / sd_safe
    Xs[:, sd == 0.0] = 0.0  # zero-variance features get coefficient 0
    ybar = float(t.mean())
    yc = t - ybar

    if lam is None:
        lam_max = float(np.max(np.abs(2.0 * (Xs.T @ yc)))) if d else 0.0
        if lam_max <= 0.0 or n < 8:
            lam = lam_max / 10.0 if lam_max > 0 else 0.0
        else:
            n_val = max(1, n // 4)
            tr, va = slice(0, n - n_val), slice(n - n_val, n)
            best = None
            # largest penalty first so ties resolve toward the sparser model
            for f in sorted(LAMBDA_GRID_FACTORS, reverse=True):
                cand = f * lam_max / 10.0
                b = _cd_lasso(Xs[tr], yc[tr], cand)
                err = _sse(Xs[va], yc[va], b)
                if best is None or err < best[0]:
                    best = (err, cand)
            lam = best[1]

    beta = _cd_lasso(Xs, yc, float(lam))
    coef = np.zeros(d)
    live = sd > 0.0
    coef[live] = beta[live] / sd[live]
    intercept = ybar - float(coef @ mu) if d else ybar
    return LearModel(
        kind="lear",
        feature_names=tuple(feature_names),
        coef=coef,
        intercept=intercept,
        lam=float(lam),
    )


def kkt_gradients(model: LearModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-feature gradients -2 x_j . r of the standardized lasso objective at
    the fitted coefficients; at optimality active features sit at |g| = lam
    and inactive ones at |g| <= lam."""
    A = np.asarray(X, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    mu = A.mean(axis=0)
    sd = A.std(axis=0)
    sd_safe = np.where(sd > 0.0, sd, 1.0)
    Xs = (A - mu) / sd_safe
    Xs[:, sd == 0.0] = 0.0
    beta = model.coef * sd_safe
    r = (t - t.mean()) - Xs @ beta
    return -2.0 * (Xs.T @ r)
