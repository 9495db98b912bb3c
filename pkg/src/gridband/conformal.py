"""Conformal interval engines: split conformal, bootstrap ensembles, and
sequential residual requantilization.

Each engine wraps a point learner and turns residual behaviour into
prediction intervals. Residual quantiles always use the conformal(n)
convention, which keeps the split-conformal finite-sample guarantee.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import DesignMatrix
from .errors import (
    AlignmentError,
    ConfigError,
    GridbandWarning,
    InsufficientHistoryError,
    ShapeError,
)
from .learners import fit_point, fit_qrf, predict_point, qrf_quantile_many
from .quantile import QuantileForecast, QuantileGrid, empirical_quantile, rearrange

SPCI_QRF_DEFAULTS = {"trees": 25, "depth": 6, "min_leaf": 5, "subsample": 0.9}


@dataclass(frozen=True)
class PredictionInterval:
    """One two-sided interval at nominal confidence 1 - 2*alpha."""

    lower: float
    upper: float
    nominal: float
    level_pair: tuple[float, float]

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ShapeError(f"interval lower {self.lower} exceeds upper {self.upper}")
        if not 0.0 < self.nominal < 1.0:
            raise ShapeError(f"nominal confidence must be in (0, 1), got {self.nominal}")

    def covers(self, y: float) -> bool:
        return self.lower <= y <= self.upper


class ResidualBuffer:
    """Fixed-capacity arrival-order residual store; oldest evicted first."""

    def __init__(self, window: int, values=()):
        if window < 1:
            raise ConfigError(f"residual window must be >= 1, got {window}")
        self.window = int(window)
        self._values: deque[float] = deque(maxlen=self.window)
        for v in values:
            self._values.append(float(v))

    def append(self, value: float) -> None:
        self._values.append(float(value))

    def __len__(self) -> int:
        return len(self._values)

    @property
    def signed(self) -> np.ndarray:
        return np.asarray(self._values, dtype=np.float64)

    @property
    def absolute(self) -> np.ndarray:
        return np.abs(self.signed)


@dataclass(frozen=True)
class IntervalSeries:
    """Per-step intervals plus the point centers they straddle."""

    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray
    alpha: float
    times: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        c = np.asarray(self.center, dtype=np.float64)
        t = np.asarray(self.times, dtype=np.int64)
        if not (lo.shape == hi.shape == c.shape == t.shape):
            raise ShapeError("interval series arrays must share one shape")
        if np.any(lo > hi + 1e-12):
            raise ShapeError("interval lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "times", t)

    @property
    def nominal(self) -> float:
        return 1.0 - 2.0 * self.alpha

    @property
    def level_pair(self) -> tuple[float, float]:
        return (self.alpha, round(1.0 - self.alpha, 12))

    def to_intervals(self) -> tuple[PredictionInterval, ...]:
        pair = self.level_pair
        nom = self.nominal
        return tuple(
            PredictionInterval(float(lo), float(hi), nom, pair)
            for lo, hi in zip(self.lower, self.upper)
        )


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 0.5:
        raise ConfigError(f"alpha must be in (0, 0.5), got {alpha}")


# --- split conformal ---------------------------------------------------------


def _scp_margin(abs_resid: np.ndarray, alpha: float) -> float:
    return empirical_quantile(abs_resid, 1.0 - 2.0 * alpha, "conformal")


def scp_run(
    kind: str,
    train: DesignMatrix,
    calib: DesignMatrix,
    test: DesignMatrix,
    alpha: float,
    params: dict | None = None,
    seed: int = 0,
) -> IntervalSeries:
    """Split conformal: one margin from held-out absolute residuals, applied
    symmetrically around every test prediction."""
    _check_alpha(alpha)
    if calib.n_rows == 0:
        raise ConfigError("calibration set is empty")
    need = math.ceil(1.0 / (2.0 * alpha))
    if calib.n_rows < need:
        warnings.warn(
            f"calibration set of {calib.n_rows} rows is below {need}; the "
            "finite-sample guarantee at this alpha is degenerate",
            GridbandWarning,
            stacklevel=2,
        )
    model = fit_point(kind, train, params, seed)
    abs_resid = np.abs(calib.targets - predict_point(model, calib.rows))
    lam = _scp_margin(abs_resid, alpha)
    center = predict_point(model, test.rows)
    return IntervalSeries(
        lower=center - lam,
        upper=center + lam,
        center=center,
        alpha=alpha,
        times=test.target_times,
    )


def scp_grid(
    kind: str,
    train: DesignMatrix,
    calib: DesignMatrix,
    test: DesignMatrix,
    grid: QuantileGrid,
    params: dict | None = None,
    seed: int = 0,
) -> QuantileForecast:
    """Full quantile grid from one split-conformal fit: each symmetric level
    pair gets its own margin around the shared point prediction."""
    model = fit_point(kind, train, params, seed)
    abs_resid = np.abs(calib.targets - predict_point(model, calib.rows))
    center = predict_point(model, test.rows)
    values = np.empty((test.n_rows, len(grid.levels)))
    for a, b in grid.pairs():
        lam = _scp_margin(abs_resid, a)
        values[:, grid.index_of(a)] = center - lam
        values[:, grid.index_of(b)] = center + lam
    if any(abs(x - 0.5) <= 1e-9 for x in grid.levels):
        values[:, grid.index_of(0.5)] = center
    return rearrange(QuantileForecast(grid=grid, values=values, times=test.target_times))


# --- bootstrap ensemble ------------------------------------------------------


@dataclass(frozen=True)
class _EnbpiState:
    pred_train: np.ndarray  # (B, n_train) member predictions on train rows
    pred_test: np.ndarray  # (B, n_test)
    indices: tuple[np.ndarray, ...]
    train_targets: np.ndarray


def _enbpi_state(
    kind: str,
    train: DesignMatrix,
    test: DesignMatrix,
    B: int,
    params: dict | None,
    seed: int,
    boot_indices=None,
    jobs: int = 1,
) -> _EnbpiState:
    if B < 1:
        raise ConfigError(f"bootstrap count must be >= 1, got {B}")
    n = train.n_rows
    if boot_indices is not None:
        indices = [np.asarray(ix, dtype=np.int64) for ix in boot_indices]
        if len(indices) != B:
            raise ConfigError(f"expected {B} bootstrap index sets, got {len(indices)}")
    else:
        indices = [
            np.random.default_rng(seed + b).integers(0, n, n) for b in range(B)
        ]

    def member(b: int) -> tuple[np.ndarray, np.ndarray]:
        sub = train.subset(indices[b])
        model = fit_point(kind, sub, params, seed + b)
        return predict_point(model, train.rows), predict_point(model, test.rows)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(member, range(B)))
    else:
        results = [member(b) for b in range(B)]
    # aggregation order is the member order, independent of scheduling
    return _EnbpiState(
        pred_train=np.stack([r[0] for r in results]),
        pred_test=np.stack([r[1] for r in results]),
        indices=tuple(indices),
        train_targets=train.targets,
    )


def _enbpi_margin(state: _EnbpiState, alpha: float, agg: str) -> float:
    B, n = state.pred_train.shape
    tau = 1.0 - 2.0 * alpha
    if agg == "oob":
        seen = np.zeros((B, n), dtype=bool)
        for b, ix in enumerate(state.indices):
            seen[b, ix] = True
        out_counts = (~seen).sum(axis=0)
        usable = out_counts > 0
        if not usable.any():
            warnings.warn(
                "no training row is left out by any bootstrap member; "
                "falling back to the margin-averaging aggregation",
                GridbandWarning,
                stacklevel=3,
            )
        else:
            resid = np.empty(int(usable.sum()))
            k = 0
            for t in np.nonzero(usable)[0]:
                mask = ~seen[:, t]
                loo = state.pred_train[mask, t].mean()
                resid[k] = abs(state.train_targets[t] - loo)
                k += 1
            return empirical_quantile(resid, tau, "conformal")
    elif agg != "paper":
        raise ConfigError(f"agg must be 'paper' or 'oob', got {agg!r}")
    per_member = [
        empirical_quantile(np.abs(state.train_targets - state.pred_train[b]), tau, "conformal")
        for b in range(B)
    ]
    return float(np.mean(per_member))


def enbpi_run(
    kind: str,
    train: DesignMatrix,
    test: DesignMatrix,
    B: int,
    alpha: float,
    params: dict | None = None,
    seed: int = 0,
    agg: str = "paper",
    boot_indices=None,
    jobs: int = 1,
) -> IntervalSeries:
    """Bootstrap-ensemble intervals: the center is the member mean and the
    margin averages per-member residual quantiles (or pools leave-one-out
    residuals with ``agg='oob'``). ``boot_indices`` overrides the resampling,
    which pins down degenerate cases in tests."""
    _check_alpha(alpha)
    state = _enbpi_state(kind, train, test, B, params, seed, boot_indices, jobs)
    lam = _enbpi_margin(state, alpha, agg)
    center = state.pred_test.mean(axis=0)
    return IntervalSeries(
        lower=center - lam,
        upper=center + lam,
        center=center,
        alpha=alpha,
        times=test.target_times,
    )


def enbpi_grid(
    kind: str,
    train: DesignMatrix,
    test: DesignMatrix,
    B: int,
    grid: QuantileGrid,
    params: dict | None = None,
    seed: int = 0,
    agg: str = "paper",
    jobs: int = 1,
) -> QuantileForecast:
    state = _enbpi_state(kind, train, test, B, params, seed, None, jobs)
    center = state.pred_test.mean(axis=0)
    values = np.empty((test.n_rows, len(grid.levels)))
    for a, b in grid.pairs():
        lam = _enbpi_margin(state, a, agg)
        values[:, grid.index_of(a)] = center - lam
        values[:, grid.index_of(b)] = center + lam
    if any(abs(x - 0.5) <= 1e-9 for x in grid.levels):
        values[:, grid.index_of(0.5)] = center
    return rearrange(QuantileForecast(grid=grid, values=values, times=test.target_times))


# --- sequential residual requantilization ------------------------------------


def _lag_design(buf: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows (r_{j-1}, ..., r_{j-p}) -> target r_j over a residual window,
    most recent lag first."""
    L = buf.size
    rows = np.empty((L - p, p))
    for lag in range(1, p + 1):
        rows[:, lag - 1] = buf[p - lag : L - lag]
    return rows, buf[p:]


def _spci_loop(
    kind: str,
    train: DesignMatrix,
    test: DesignMatrix,
    need_levels: tuple[float, ...],
    *,
    window: int,
    resid_lags: int,
    qrf_params: dict | None,
    base_params: dict | None,
    seed: int,
    mode: str,
    refit_every: int,
    convention: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Shared engine: returns (center, Q) where Q[t, j] is the residual
    quantile at need_levels[j] for step t. In symmetric mode the levels are
    coverages and Q holds absolute-residual margins."""
    if mode not in ("signed", "symmetric"):
        raise ConfigError(f"mode must be 'signed' or 'symmetric', got {mode!r}")
    if resid_lags < 1:
        raise ConfigError(f"resid_lags must be >= 1, got {resid_lags}")
    if window <= resid_lags:
        raise ConfigError(
            f"window ({window}) must exceed resid_lags ({resid_lags})"
        )
    if refit_every < 1:
        raise ConfigError(f"refit_every must be >= 1, got {refit_every}")
    if test.n_rows > 1 and np.any(np.diff(test.target_times) <= 0):
        raise AlignmentError("test rows must be in chronological order")

    base = fit_point(kind, train, base_params, seed)
    train_resid = train.targets - predict_point(base, train.rows)
    buf = ResidualBuffer(window, train_resid[-window:])
    if len(buf) < resid_lags + 1:
        raise InsufficientHistoryError(
            f"{len(buf)} seed residuals cannot form lags of depth {resid_lags}"
        )
    center = predict_point(base, test.rows)

    qp = {**SPCI_QRF_DEFAULTS, **(qrf_params or {})}
    Q = np.empty((test.n_rows, len(need_levels)))
    model = None
    feat_names = tuple(f"resid_lag_{k}" for k in range(1, resid_lags + 1))
    for i in range(test.n_rows):
        series = buf.signed if mode == "signed" else buf.absolute
        if model is None or i % refit_every == 0:
            rows, targets = _lag_design(series, resid_lags)
            design = DesignMatrix(
                rows=rows,
                targets=targets,
                feature_names=feat_names,
                target_times=np.arange(rows.shape[0], dtype=np.int64),
            )
            model = fit_qrf(design, qp, seed + i)
        query = series[-resid_lags:][::-1].copy()[None, :]
        levels = (
            need_levels
            if mode == "signed"
            else tuple(min(1.0 - 1e-9, tau) for tau in need_levels)
        )
        Q[i] = qrf_quantile_many(model, query, levels, convention)[0]
        buf.append(test.targets[i] - center[i])
    return center, Q


def spci_run(
    kind: str,
    train: DesignMatrix,
    test: DesignMatrix,
    alpha: float,
    window: int = 200,
    resid_lags: int = 8,
    qrf_params: dict | None = None,
    base_params: dict | None = None,
    seed: int = 0,
    mode: str = "signed",
    refit_every: int = 1,
    convention: str = "conformal",
) -> IntervalSeries:
    """Sequential intervals: a quantile forest on lagged residuals predicts
    the next residual's quantiles, re-estimated as each truth arrives. Signed
    mode shifts the center by the residual quantiles; symmetric mode uses one
    absolute-residual margin per step."""
    _check_alpha(alpha)
    if mode == "signed":
        levels = (alpha, 1.0 - alpha)
    else:
        levels = (1.0 - 2.0 * alpha,)
    center, Q = _spci_loop(
        kind,
        train,
        test,
        levels,
        window=window,
        resid_lags=resid_lags,
        qrf_params=qrf_params,
        base_params=base_params,
        seed=seed,
        mode=mode,
        refit_every=refit_every,
        convention=convention,
    )
    if mode == "signed":
        lower, upper = center + Q[:, 0], center + Q[:, 1]
    else:
        lower, upper = center - Q[:, 0], center + Q[:, 0]
    return IntervalSeries(
        lower=lower, upper=upper, center=center, alpha=alpha, times=test.target_times
    )


def spci_grid(
    kind: str,
    train: DesignMatrix,
    test: DesignMatrix,
    grid: QuantileGrid,
    window: int = 200,
    resid_lags: int = 8,
    qrf_params: dict | None = None,
    base_params: dict | None = None,
    seed: int = 0,
    mode: str = "signed",
    refit_every: int = 1,
    convention: str = "conformal",
) -> QuantileForecast:
    if mode == "signed":
        center, Q = _spci_loop(
            kind,
            train,
            test,
            tuple(grid.levels),
            window=window,
            resid_lags=resid_lags,
            qrf_params=qrf_params,
            base_params=base_params,
            seed=seed,
            mode=mode,
            refit_every=refit_every,
            convention=convention,
        )
        values = center[:, None] + Q
    else:
        pairs = grid.pairs()
        taus = tuple(1.0 - 2.0 * a for a, _ in pairs)
        center, Q = _spci_loop(
            kind,
            train,
            test,
            taus,
            window=window,
            resid_lags=resid_lags,
            qrf_params=qrf_params,
            base_params=base_params,
            seed=seed,
            mode=mode,
            refit_every=refit_every,
            convention=convention,
        )
        values = np.empty((test.n_rows, len(grid.levels)))
        for m, (a, b) in enumerate(pairs):
            values[:, grid.index_of(a)] = center - Q[:, m]
            values[:, grid.index_of(b)] = center + Q[:, m]
        if any(abs(x - 0.5) <= 1e-9 for x in grid.levels):
            values[:, grid.index_of(0.5)] = center
    return rearrange(QuantileForecast(grid=grid, values=values, times=test.target_times))
