"""Quantile primitives shared by every interval producer.

Covers the asymmetric check loss, empirical quantile conventions, the
linear quantile regression solver, and the crossing repair applied after
every interval method.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import DesignMatrix
from .errors import ConfigError, GridbandWarning, ShapeError

DECILES = tuple(round(0.1 * k, 1) for k in range(1, 10))

_LEVEL_TOL = 1e-9


def pinball(qhat, y, alpha: float):
    """Check loss of a quantile prediction.

    Returns ``(1 - alpha) * (qhat - y)`` when ``y <= qhat`` and
    ``alpha * (y - qhat)`` otherwise; always non-negative. Accepts scalars
    or broadcastable arrays.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    q = np.asarray(qhat, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    out = np.where(t <= q, (1.0 - alpha) * (q - t), alpha * (t - q))
    if out.ndim == 0:
        return float(out)
    return out


def _ceil_index(v: float) -> int:
    """Integer ceiling robust to float dust on exact products like 0.8 * 5."""
    r = round(v)
    if abs(v - r) < 1e-9:
        return int(r)
    return int(math.ceil(v))


def empirical_quantile(values, p: float, convention: str = "higher") -> float:
    """Empirical quantile under an explicit, stable convention.

    Conventions
    -----------
    ``higher``
        k-th smallest with ``k = ceil(p * n)``.
    ``conformal``
        k-th smallest with ``k = ceil((n + 1) * p)`` clamped to ``n``; the
        finite-sample-valid choice for calibration residuals.
    ``linear``
        standard linear interpolation (``np.quantile``).
    """
    vals = np.asarray(values, dtype=np.float64).ravel()
    n = vals.size
    if n == 0:
        raise ConfigError("empirical_quantile of an empty collection")
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"quantile level must be in (0, 1], got {p}")
    if convention == "linear":
        return float(np.quantile(vals, p))
    if convention == "higher":
        k = _ceil_index(p * n)
    elif convention == "conformal":
        k = _ceil_index((n + 1) * p)
    else:
        raise ConfigError(f"unknown quantile convention {convention!r}")
    k = min(max(k, 1), n)
    return float(np.partition(vals, k - 1)[k - 1])


@dataclass(frozen=True)
class QuantileGrid:
    """Sorted quantile levels; every level must have its mirror ``1 - level``
    so symmetric intervals can be read off the grid."""

    levels: tuple[float, ...] = DECILES

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        if len(lv) == 0:
            raise ConfigError("quantile grid is empty")
        if any(not 0.0 < x < 1.0 for x in lv):
            raise ConfigError("grid levels must lie in (0, 1)")
        if any(b - a <= _LEVEL_TOL for a, b in zip(lv, lv[1:])):
            raise ConfigError("grid levels must be strictly increasing")
        for x in lv:
            if min(abs(1.0 - x - z) for z in lv) > _LEVEL_TOL:
                raise ConfigError(f"grid is not symmetric: level {x} lacks {1.0 - x}")
        object.__setattr__(self, "levels", lv)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=np.float64)

    def pairs(self) -> list[tuple[float, float]]:
        """Symmetric (alpha, 1 - alpha) pairs with alpha < 0.5, sorted by alpha."""
        return [(a, round(1.0 - a, 12)) for a in self.levels if a < 0.5 - _LEVEL_TOL]

    def index_of(self, level: float) -> int:
        for i, x in enumerate(self.levels):
            if abs(x - level) <= _LEVEL_TOL:
                return i
        raise ConfigError(f"level {level} not on grid {self.levels}")


@dataclass(frozen=True)
class QuantileForecast:
    """Per-step quantile predictions on a fixed grid.

    ``values[t, i]`` is the prediction at ``grid.levels[i]`` for step ``t``.
    ``times`` carries the target timestamps (epoch seconds) when known.
    """

    grid: QuantileGrid
    values: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != len(self.grid.levels):
            raise ShapeError(
                f"forecast values {v.shape} do not match grid of {len(self.grid.levels)} levels"
            )
        object.__setattr__(self, "values", v)
        if self.times is not None:
            t = np.asarray(self.times, dtype=np.int64)
            if t.shape[0] != v.shape[0]:
                raise ShapeError("times length does not match forecast steps")
            object.__setattr__(self, "times", t)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    def level_column(self, level: float) -> np.ndarray:
        return self.values[:, self.grid.index_of(level)]

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values, axis=1) >= 0.0))


def weighted_quantile(
    values, weights, p: float, convention: str = "conformal"
) -> float:
    """Quantile of a weighted multiset under the same conventions as
    ``empirical_quantile``; with equal weights the two agree exactly.

    ``higher`` returns the smallest value whose normalized cumulative weight
    reaches ``p``; ``conformal`` inflates the cut to ``p * (n + 1) / n`` with
    ``n`` the number of positive-weight entries; ``linear`` interpolates the
    midpoint-rule weighted CDF. A 1e-9 slack absorbs cumulative-sum dust.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    w = np.asarray(weights, dtype=np.float64).ravel()
    if v.shape != w.shape:
        raise ShapeError("values and weights must have equal length")
    if np.any(w < 0.0):
        raise ConfigError("weights must be non-negative")
    keep = w > 0.0
    v, w = v[keep], w[keep]
    n = v.size
    if n == 0:
        raise ConfigError("weighted_quantile of an empty (all-zero-weight) set")
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"quantile level must be in (0, 1], got {p}")
    order = np.argsort(v, kind="stable")
    v = v[order]
    w = w[order]
    cum = np.cumsum(w)
    total = cum[-1]
    frac = cum / total
    if convention == "linear":
        mid = (cum - 0.5 * w) / total
        return float(np.interp(p, mid, v))
    if convention == "higher":
        cut = p
    elif convention == "conformal":
        cut = min(1.0, p * (n + 1) / n)
    else:
        raise ConfigError(f"unknown quantile convention {convention!r}")
    k = int(np.argmax(frac >= cut - 1e-9))
    return float(v[k])


def rearrange(forecast: QuantileForecast) -> QuantileForecast:
    """Repair quantile crossing by sorting each step's values ascending and
    reassigning them to the sorted levels. Idempotent; preserves the per-step
    multiset of values."""
    return QuantileForecast(
        grid=forecast.grid,
        values=np.sort(forecast.values, axis=1),
        times=forecast.times,
    )


@dataclass(frozen=True)
class LinearQuantileModel:
    """Fitted linear quantile model ``q(x) = intercept + x . coef``."""

    alpha: float
    coef: np.ndarray
    intercept: float
    objective: float
    iterations: int
    feature_names: tuple[str, ...] = field(default=())

    def predict(self, rows: np.ndarray) -> np.ndarray:
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.coef.shape[0]:
            raise ShapeError(
                f"row width {X.shape} does not match {self.coef.shape[0]} fitted features"
            )
        return X @ self.coef + self.intercept


def _check_objective(A: np.ndarray, y: np.ndarray, beta: np.ndarray, alpha: float) -> float:
    r = y - A @ beta
    return float(np.sum(np.where(r >= 0.0, alpha * r, (alpha - 1.0) * r)))


def _pinball_optimal_shift(z: np.ndarray, alpha: float) -> float:
    """Constant minimizing sum of check losses of ``z - c``: the k-th smallest
    of ``z`` with ``k = ceil(n * alpha)`` (left end of the optimal set)."""
    n = z.size
    k = min(max(_ceil_index(alpha * n), 1), n)
    return float(np.partition(z, k - 1)[k - 1])


def fit_linear_qr(
    data: DesignMatrix,
    alpha: float,
    max_iter: int = 300,
    tol: float = 1e-8,
) -> LinearQuantileModel:
    """Linear quantile regression by smoothed iteratively reweighted least
    squares with an exact intercept polish.

    The iteration minimizes the check loss with residual smoothing scale
    annealed toward zero; it stops when the relative objective change drops
    below ``tol`` at the smallest scale or after ``max_iter`` total solves.
    The returned objective is never worse than the intercept-only fit at the
    empirical ``alpha``-quantile.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    X = np.asarray(data.rows, dtype=np.float64)
    y = np.asarray(data.targets, dtype=np.float64)
    n, d = X.shape
    if n == 0:
        raise ConfigError("cannot fit quantile regression on empty data")

    mu = X.mean(axis=0) if d else np.zeros(0)
    sd = X.std(axis=0) if d else np.zeros(0)
    live = sd > 0.0
    if d and not live.any():
        warnings.warn(
            "design has no varying features; returning intercept-only quantile model",
            GridbandWarning,
            stacklevel=2,
        )
    Xs = (X[:, live] - mu[live]) / sd[live]
    k_live = Xs.shape[1]
    A = np.column_stack([np.ones(n), Xs])

    beta = np.zeros(k_live + 1)
    beta[0] = _pinball_optimal_shift(y, alpha)
    base_obj = _check_objective(A, y, beta, alpha)
    best_obj, best_beta = base_obj, beta.copy()

    scale = max(float(np.std(y)), 1e-8)
    delta = 1e-2 * scale
    iters = 0
    obj_prev = best_obj
    while iters < max_iter:
        r = y - A @ beta
        w = np.where(r >= 0.0, alpha, 1.0 - alpha) / np.maximum(np.abs(r), delta)
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
        iters += 1
        obj = _check_objective(A, y, beta, alpha)
        if obj < best_obj:
            best_obj, best_beta = obj, beta.copy()
        rel = abs(obj_prev - obj) / max(abs(obj_prev), 1e-12)
        obj_prev = obj
        if rel < tol:
            if delta <= 1e-10 * scale:
                break
            delta *= 0.1

    beta = best_beta
    # exact coordinate step on the intercept: optimal given the slopes
    z = y - A[:, 1:] @ beta[1:] if k_live else y
    polished = beta.copy()
    polished[0] = _pinball_optimal_shift(z, alpha)
    if _check_objective(A, y, polished, alpha) <= best_obj:
        beta = polished
        best_obj = _check_objective(A, y, polished, alpha)

    coef = np.zeros(d)
    if k_live:
        coef[live] = beta[1:] / sd[live]
    intercept = float(beta[0] - (coef[live] @ mu[live] if k_live else 0.0))
    return LinearQuantileModel(
        alpha=alpha,
        coef=coef,
        intercept=intercept,
        objective=best_obj,
        iterations=iters,
        feature_names=tuple(data.feature_names),
    )
