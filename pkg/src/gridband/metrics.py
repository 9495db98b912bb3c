"""Forecast evaluation: pinball aggregation, coverage, Winkler score, and the
consolidated per-method report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .conformal import IntervalSeries, PredictionInterval
from .errors import AlignmentError, ConfigError, ShapeError
from .quantile import QuantileForecast, pinball


def aps(forecast: QuantileForecast, truths) -> float:
    """Aggregate pinball score: mean of the check loss over every time step
    and every grid level."""
    y = np.asarray(truths, dtype=np.float64)
    if y.shape != (forecast.n_steps,):
        raise ShapeError(
            f"{y.shape[0] if y.ndim else 'scalar'} truths for {forecast.n_steps} steps"
        )
    total = 0.0
    for j, level in enumerate(forecast.grid.levels):
        total += float(np.mean(pinball(forecast.values[:, j], y, level)))
    return total / len(forecast.grid.levels)


def _bounds(intervals) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(intervals, IntervalSeries):
        return intervals.lower, intervals.upper
    if isinstance(intervals, tuple) and len(intervals) == 2:
        return (
            np.asarray(intervals[0], dtype=np.float64),
            np.asarray(intervals[1], dtype=np.float64),
        )
    seq = list(intervals)
    if not all(isinstance(iv, PredictionInterval) for iv in seq):
        raise ShapeError("expected an IntervalSeries, (lower, upper), or intervals")
    return (
        np.asarray([iv.lower for iv in seq]),
        np.asarray([iv.upper for iv in seq]),
    )


def coverage(intervals, truths) -> float:
    """Fraction of steps whose truth lands inside the closed interval."""
    lower, upper = _bounds(intervals)
    y = np.asarray(truths, dtype=np.float64)
    if y.shape != lower.shape or y.size == 0:
        raise ShapeError("truths must align with a non-empty interval series")
    inside = (lower <= y) & (y <= upper)
    return float(np.mean(inside))


def winkler(interval: PredictionInterval, y: float, tau: float | None = None) -> float:
    """Interval width plus a (2/tau)-scaled penalty when the truth falls
    outside. ``tau`` defaults to the interval's nominal miscoverage."""
    if tau is None:
        tau = 1.0 - interval.nominal
    if tau <= 0.0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    width = interval.upper - interval.lower
    if y < interval.lower:
        return width + (2.0 / tau) * (interval.lower - y)
    if y > interval.upper:
        return width + (2.0 / tau) * (y - interval.upper)
    return width


def winkler_series(lower, upper, truths, tau: float) -> np.ndarray:
    """Vectorized Winkler scores for aligned bound arrays."""
    if tau <= 0.0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    y = np.asarray(truths, dtype=np.float64)
    width = hi - lo
    below = np.maximum(lo - y, 0.0)
    above = np.maximum(y - hi, 0.0)
    return width + (2.0 / tau) * (below + above)


@dataclass(frozen=True)
class ReportRow:
    method: str
    learner: str
    level_pair: tuple[float, float]
    aps: float
    mean_width: float
    coverage: float
    winkler: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    """Per (method, learner, level pair) metrics plus best/worst method per
    learner by Winkler averaged over the level pairs."""

    rows: tuple[ReportRow, ...]
    flags: tuple[tuple[str, str, str], ...]  # (learner, best_method, worst_method)

    def to_csv_text(self, config_hash: str | None = None) -> str:
        lines = []
        if config_hash:
            lines.append(f"# config_hash: {config_hash}")
        lines.append("method,learner,level_pair,aps,mean_width,coverage,winkler,n")
        for r in self.rows:
            pair = f"{r.level_pair[0]!r}-{r.level_pair[1]!r}"
            lines.append(
                f"{r.method},{r.learner},{pair},{r.aps!r},{r.mean_width!r},"
                f"{r.coverage!r},{r.winkler!r},{r.n}"
            )
        return "\n".join(lines) + "\n"

    def to_json_text(self, config_hash: str | None = None) -> str:
        doc = {
            "rows": [
                {**asdict(r), "level_pair": list(r.level_pair)} for r in self.rows
            ],
            "flags": [
                {"learner": lrn, "best": best, "worst": worst}
                for lrn, best, worst in self.flags
            ],
        }
        if config_hash:
            doc["config_hash"] = config_hash
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def build_report(runs: dict, truths) -> EvalReport:
    """Metrics table over runs keyed by (method, learner), each holding a
    QuantileForecast on one shared evaluation region."""
    if not runs:
        raise ConfigError("no runs to report on")
    y = np.asarray(truths, dtype=np.float64)
    keys = sorted(runs)
    ref_times = None
    rows: list[ReportRow] = []
    per_learner: dict[str, dict[str, list[float]]] = {}
    for method, learner in keys:
        fc: QuantileForecast = runs[(method, learner)]
        if y.shape != (fc.n_steps,):
            raise AlignmentError(
                f"run {method}/{learner} covers {fc.n_steps} steps but "
                f"{y.shape[0]} truths were given"
            )
        if fc.times is not None:
            if ref_times is None:
                ref_times = fc.times
            elif not np.array_equal(ref_times, fc.times):
                raise AlignmentError(
                    f"run {method}/{learner} covers a different evaluation region"
                )
        score = aps(fc, y)
        for a, b in fc.grid.pairs():
            lo = fc.level_column(a)
            hi = fc.level_column(b)
            tau = 2.0 * a
            wk = float(np.mean(winkler_series(lo, hi, y, tau)))
            rows.append(
                ReportRow(
                    method=method,
                    learner=learner,
                    level_pair=(a, b),
                    aps=score,
                    mean_width=float(np.mean(hi - lo)),
                    coverage=coverage((lo, hi), y),
                    winkler=wk,
                    n=int(y.shape[0]),
                )
            )
            per_learner.setdefault(learner, {}).setdefault(method, []).append(wk)
    flags = []
    for learner in sorted(per_learner):
        means = {m: float(np.mean(v)) for m, v in per_learner[learner].items()}
        best = min(sorted(means), key=lambda m: means[m])
        worst = max(sorted(means), key=lambda m: means[m])
        flags.append((learner, best, worst))
    return EvalReport(rows=tuple(rows), flags=tuple(flags))
