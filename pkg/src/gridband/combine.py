"""Forecast combination: quantile-regression averaging over point-forecast
pools and the equal-weight quantile ensemble."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DesignMatrix
from .errors import ConfigError, ShapeError
from .quantile import QuantileForecast, QuantileGrid, fit_linear_qr, rearrange


@dataclass(frozen=True)
class ForecastPool:
    """Aligned point forecasts from M members over calibration-then-evaluation
    steps. Truths are known for the first ``len(truths)`` steps only."""

    times: np.ndarray
    members: np.ndarray  # (T, M)
    labels: tuple[str, ...]
    truths: np.ndarray  # (C,) with C <= T

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.int64)
        m = np.asarray(self.members, dtype=np.float64)
        y = np.asarray(self.truths, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != t.shape[0]:
            raise ShapeError("member matrix must be (steps, members) aligned with times")
        if m.shape[1] != len(self.labels):
            raise ShapeError(f"{m.shape[1]} member columns but {len(self.labels)} labels")
        if m.shape[1] < 1:
            raise ConfigError("pool needs at least one member")
        if y.shape[0] > t.shape[0]:
            raise ShapeError("more truths than pool steps")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ShapeError("pool times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "members", m)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "truths", y)

    @property
    def calib_steps(self) -> int:
        return int(self.truths.shape[0])

    @property
    def eval_steps(self) -> int:
        return int(self.times.shape[0] - self.truths.shape[0])


def qra_run(pool: ForecastPool, grid: QuantileGrid, calib_len: int) -> QuantileForecast:
    """Per level, regress calibration truths on member forecasts over the
    trailing ``calib_len`` calibration steps, then predict the evaluation
    steps. Crossing repair is applied to the result."""
    M = len(pool.labels)
    C = pool.calib_steps
    if calib_len < M + 2:
        raise ConfigError(
            f"calib_len must be at least members + 2 = {M + 2}, got {calib_len}"
        )
    if calib_len > C:
        raise ConfigError(f"calib_len {calib_len} exceeds {C} calibration steps")
    if pool.eval_steps == 0:
        raise ConfigError("pool has no evaluation steps beyond the truths")

    calib = DesignMatrix(
        rows=pool.members[C - calib_len : C],
        targets=pool.truths[C - calib_len :],
        feature_names=pool.labels,
        target_times=pool.times[C - calib_len : C],
    )
    eval_rows = pool.members[C:]
    values = np.empty((pool.eval_steps, len(grid.levels)))
    for j, level in enumerate(grid.levels):
        model = fit_linear_qr(calib, level)
        values[:, j] = model.predict(eval_rows)
    return rearrange(
        QuantileForecast(grid=grid, values=values, times=pool.times[C:])
    )


def q_ens(
    qr: QuantileForecast, enbpi: QuantileForecast, spci: QuantileForecast
) -> QuantileForecast:
    """Equal-weight average of three quantile forecasts, level by level, with
    crossing repair afterward."""
    parts = (qr, enbpi, spci)
    first = parts[0]
    for other in parts[1:]:
        if other.grid.levels != first.grid.levels:
            raise ShapeError(
                f"grid mismatch: {other.grid.levels} vs {first.grid.levels}"
            )
        if other.values.shape != first.values.shape:
            raise ShapeError("quantile forecasts cover different step counts")
        if first.times is not None and other.times is not None:
            if not np.array_equal(first.times, other.times):
                raise ShapeError("quantile forecasts cover different time steps")
    # sum smallest-to-largest per component so the result is bitwise
    # identical under any permutation of the three inputs
    stacked = np.sort(np.stack([qr.values, enbpi.values, spci.values]), axis=0)
    mean = (stacked[0] + stacked[1] + stacked[2]) / 3.0
    return rearrange(QuantileForecast(grid=first.grid, values=mean, times=first.times))
