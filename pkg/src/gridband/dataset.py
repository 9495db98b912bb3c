"""Time-series ingestion, lag features, rolling windows, and synthetic data.

Everything downstream consumes either a SeriesFrame (a target series plus
covariates on a uniform time grid) or a DesignMatrix built from one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import (
    AlignmentError,
    ConfigError,
    DataError,
    GridError,
    InsufficientHistoryError,
    RowParseError,
    SchemaError,
    ShapeError,
)


def parse_timestamp(text: str) -> int:
    """ISO-8601 timestamp to epoch seconds. Naive stamps are read as UTC."""
    s = text.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    dt = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class SeriesFrame:
    """Target series and covariate series on one uniform timestamp grid.

    ``times`` is epoch seconds, strictly increasing with constant spacing.
    All series have the same length and contain no NaN.
    """

    times: np.ndarray
    target: np.ndarray
    target_name: str = "price"
    covariates: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.int64)
        y = np.asarray(self.target, dtype=np.float64)
        if t.ndim != 1 or y.ndim != 1 or t.shape != y.shape:
            raise ShapeError("times and target must be 1-d arrays of equal length")
        if t.size < 2:
            raise GridError("a series frame needs at least two rows")
        gaps = np.diff(t)
        if np.any(gaps <= 0):
            i = int(np.argmax(gaps <= 0))
            raise GridError(
                f"timestamps not strictly increasing at {format_timestamp(t[i + 1])}"
            )
        if np.any(gaps != gaps[0]):
            i = int(np.argmax(gaps != gaps[0]))
            raise GridError(
                f"non-uniform spacing between {format_timestamp(t[i])} and "
                f"{format_timestamp(t[i + 1])}: {int(gaps[i])}s vs {int(gaps[0])}s"
            )
        cov = {}
        for name, arr in self.covariates.items():
            a = np.asarray(arr, dtype=np.float64)
            if a.shape != y.shape:
                raise AlignmentError(f"covariate {name!r} length does not match target")
            if np.any(~np.isfinite(a)):
                raise DataError(f"covariate {name!r} contains non-finite values")
            cov[name] = a
        if np.any(~np.isfinite(y)):
            raise DataError("target contains non-finite values")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "covariates", cov)

    @property
    def length(self) -> int:
        return int(self.times.size)

    @property
    def period_seconds(self) -> int:
        return int(self.times[1] - self.times[0])

    def write_csv(self, path) -> None:
        names = sorted(self.covariates)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", self.target_name, *names])
            for i in range(self.length):
                row = [format_timestamp(self.times[i]), repr(float(self.target[i]))]
                row += [repr(float(self.covariates[n][i])) for n in names]
                w.writerow(row)


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for ingestion. ``covariates=None`` takes every column
    that is not the timestamp or target."""

    timestamp: str = "timestamp"
    target: str = "price"
    covariates: tuple[str, ...] | None = None
    missing: str = "reject"  # "reject" or "ffill"

    def __post_init__(self):
        if self.missing not in ("reject", "ffill"):
            raise ConfigError(f"missing policy must be reject or ffill, got {self.missing!r}")


def load_csv(path, schema: CsvSchema = CsvSchema()) -> SeriesFrame:
    """Read a CSV into a SeriesFrame.

    Errors carry 1-based line numbers (the header is line 1). Rows are sorted
    by timestamp before grid validation, so file order does not matter.
    """
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"series file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        header = None
        header_line = 0
        for lineno, row in enumerate(reader, start=1):
            if row and row[0].lstrip().startswith("#"):
                continue
            header = [h.strip() for h in row]
            header_line = lineno
            break
        if header is None:
            raise SchemaError(f"{path}: file has no header row")
        for col in (schema.timestamp, schema.target):
            if col not in header:
                raise SchemaError(f"{path}: required column {col!r} not in header {header}")
        if schema.covariates is None:
            cov_names = tuple(
                h for h in header if h not in (schema.timestamp, schema.target)
            )
        else:
            cov_names = tuple(schema.covariates)
            for col in cov_names:
                if col not in header:
                    raise SchemaError(f"{path}: covariate column {col!r} not in header")
        ts_i = header.index(schema.timestamp)
        y_i = header.index(schema.target)
        cov_i = [header.index(c) for c in cov_names]

        times: list[int] = []
        cells: list[list[float | None]] = []
        for lineno, row in enumerate(reader, start=header_line + 1):
            if not row or all(not c.strip() for c in row):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if len(row) != len(header):
                raise RowParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                times.append(parse_timestamp(row[ts_i]))
            except ValueError:
                raise RowParseError(
                    f"{path}:{lineno}: bad timestamp {row[ts_i]!r}"
                ) from None
            vals: list[float | None] = []
            for ci in [y_i, *cov_i]:
                text = row[ci].strip()
                if text == "":
                    if schema.missing == "reject":
                        raise RowParseError(
                            f"{path}:{lineno}: missing value in column {header[ci]!r}"
                        )
                    vals.append(None)
                    continue
                try:
                    v = float(text)
                except ValueError:
                    raise RowParseError(
                        f"{path}:{lineno}: bad number {text!r} in column {header[ci]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise RowParseError(
                        f"{path}:{lineno}: non-finite value in column {header[ci]!r}"
                    )
                vals.append(v)
            cells.append(vals)

    if len(times) < 2:
        raise GridError(f"{path}: need at least two data rows, got {len(times)}")
    order = np.argsort(np.asarray(times, dtype=np.int64), kind="stable")
    t = np.asarray(times, dtype=np.int64)[order]
    dup = np.nonzero(np.diff(t) == 0)[0]
    if dup.size:
        raise GridError(f"{path}: duplicate timestamp {format_timestamp(t[dup[0]])}")

    n_cols = 1 + len(cov_names)
    data = np.full((len(cells), n_cols), np.nan)
    for r, vals in enumerate(cells):
        for c, v in enumerate(vals):
            if v is not None:
                data[r, c] = v
    data = data[order]
    if schema.missing == "ffill":
        for c in range(n_cols):
            col = data[:, c]
            if math.isnan(col[0]):
                name = ([schema.target, *cov_names])[c]
                raise DataError(f"{path}: column {name!r} starts with a missing value")
            for r in range(1, col.size):
                if math.isnan(col[r]):
                    col[r] = col[r - 1]

    return SeriesFrame(
        times=t,
        target=data[:, 0],
        target_name=schema.target,
        covariates={name: data[:, 1 + j] for j, name in enumerate(cov_names)},
    )


@dataclass(frozen=True)
class LagSpec:
    """Lag layout for feature building.

    A row is indexed by its target time ``s``; target lag ``k`` reads
    ``y[s - k]``. Covariate lags may be zero or negative, meaning values
    known ahead of time (forecasts). ``lead`` is how many periods ahead the
    target sits relative to the information boundary: every target lag must
    be at least ``lead`` so no unavailable value leaks into a row.
    """

    target_lags: tuple[int, ...]
    covariate_lags: dict[str, tuple[int, ...]] = field(default_factory=dict)
    lead: int = 1

    def __post_init__(self):
        if self.lead < 1:
            raise ConfigError(f"lead must be >= 1, got {self.lead}")
        tl = tuple(sorted(int(k) for k in self.target_lags))
        if len(tl) != len(set(tl)):
            raise ConfigError("duplicate target lag")
        for k in tl:
            if k < self.lead:
                raise ConfigError(
                    f"target lag {k} is inside the forecast lead {self.lead}; "
                    "that value is not yet observed when the row is formed"
                )
        cl = {}
        for name, lags in self.covariate_lags.items():
            ll = tuple(sorted(int(k) for k in lags))
            if len(ll) != len(set(ll)):
                raise ConfigError(f"duplicate lag for covariate {name!r}")
            cl[name] = ll
        object.__setattr__(self, "target_lags", tl)
        object.__setattr__(self, "covariate_lags", cl)
        if not tl and not cl:
            raise ConfigError("lag spec selects no features")


@dataclass(frozen=True)
class DesignMatrix:
    """Feature rows with aligned targets and target timestamps."""

    rows: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    target_times: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.rows, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.float64)
        t = np.asarray(self.target_times, dtype=np.int64)
        if X.ndim != 2:
            raise ShapeError("design rows must be 2-d")
        if X.shape[1] != len(self.feature_names):
            raise ShapeError(
                f"{X.shape[1]} columns but {len(self.feature_names)} feature names"
            )
        if y.shape != (X.shape[0],) or t.shape != (X.shape[0],):
            raise ShapeError("targets and target_times must match row count")
        object.__setattr__(self, "rows", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "target_times", t)

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    def subset(self, mask_or_index) -> "DesignMatrix":
        return DesignMatrix(
            rows=self.rows[mask_or_index],
            targets=self.targets[mask_or_index],
            feature_names=self.feature_names,
            target_times=self.target_times[mask_or_index],
        )


def _feature_name(base: str, lag: int) -> str:
    if lag > 0:
        return f"{base}_lag_{lag}"
    return f"{base}_lead_{-lag}"


def build_features(frame: SeriesFrame, spec: LagSpec, horizon: int = 1) -> DesignMatrix:
    """Turn a frame into lagged feature rows.

    A row exists for target time ``s`` when every referenced value is inside
    the frame: target lags reach back ``max(lags)`` periods, negative
    covariate lags reach forward, and the last ``horizon - 1`` positions are
    dropped so a ``horizon``-step forecast made from the final usable row
    still lands inside the frame.
    """
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    for name in spec.covariate_lags:
        if name not in frame.covariates:
            raise ConfigError(f"lag spec references unknown covariate {name!r}")

    pos_lags = [k for k in spec.target_lags]
    fut = [0]
    for lags in spec.covariate_lags.values():
        pos_lags += [k for k in lags if k > 0]
        fut += [-k for k in lags if k <= 0]
    max_hist = max(pos_lags) if pos_lags else 0
    max_future = max(fut)

    n = frame.length
    s0 = max_hist
    s1 = (n - 1) - max_future - (horizon - 1)
    if s1 < s0:
        raise InsufficientHistoryError(
            f"frame of {n} rows cannot host lags reaching {max_hist} back and "
            f"{max_future} forward with horizon {horizon}"
        )

    cols: list[np.ndarray] = []
    names: list[str] = []
    for k in spec.target_lags:
        cols.append(frame.target[s0 - k : s1 + 1 - k])
        names.append(_feature_name(frame.target_name, k))
    for cname in sorted(spec.covariate_lags):
        series = frame.covariates[cname]
        for k in spec.covariate_lags[cname]:
            cols.append(series[s0 - k : s1 + 1 - k])
            names.append(_feature_name(cname, k))

    rows = np.column_stack(cols) if cols else np.zeros((s1 - s0 + 1, 0))
    return DesignMatrix(
        rows=rows,
        targets=frame.target[s0 : s1 + 1].copy(),
        feature_names=tuple(names),
        target_times=frame.times[s0 : s1 + 1].copy(),
    )


def rolling_splits(
    frame: SeriesFrame, train_len: int, step: int, horizon: int
) -> list[tuple[slice, slice]]:
    """Rolling-origin windows over frame positions.

    Each element is ``(train, test)`` as slices into the frame; the train
    slice ends exactly where the test slice begins, and test slices never
    run past the frame. Returns an empty list when no origin fits.
    """
    if train_len < 1:
        raise ConfigError(f"train_len must be >= 1, got {train_len}")
    if step < 1:
        raise ConfigError(f"step must be >= 1, got {step}")
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    n = frame.length
    out: list[tuple[slice, slice]] = []
    origin = train_len
    while origin + horizon <= n:
        out.append((slice(origin - train_len, origin), slice(origin, origin + horizon)))
        origin += step
    return out


@dataclass(frozen=True)
class SynthParams:
    """Knobs for the synthetic price generator.

    The series is ``mean + seasonal + ar + spike`` where seasonal is a sum of
    two sinusoids, ar is a Gaussian-driven AR(p), and spike is an occasional
    Bernoulli-gated Gaussian shock drawn from an independent stream (so
    toggling spikes leaves the other components bit-identical).
    """

    n: int = 2000
    period_minutes: int = 60
    start: str = "2024-01-01T00:00:00Z"
    mean: float = 50.0
    ar: tuple[float, ...] = (0.4, 0.2)
    noise_scale: float = 4.0
    daily_amp: float = 8.0
    weekly_amp: float = 3.0
    daily_period: int = 24
    weekly_period: int = 168
    spike_prob: float = 0.01
    spike_scale: float = 40.0

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if self.period_minutes < 1:
            raise ConfigError("period_minutes must be >= 1")
        if self.noise_scale < 0 or self.spike_scale < 0:
            raise ConfigError("scales must be non-negative")
        if not 0.0 <= self.spike_prob <= 1.0:
            raise ConfigError("spike_prob must be in [0, 1]")
        if self.daily_period < 1 or self.weekly_period < 1:
            raise ConfigError("seasonal periods must be >= 1")
        if self.ar:
            p = len(self.ar)
            companion = np.zeros((p, p))
            companion[0, :] = self.ar
            if p > 1:
                companion[1:, :-1] = np.eye(p - 1)
            radius = float(np.max(np.abs(np.linalg.eigvals(companion))))
            if radius >= 1.0:
                raise ConfigError(
                    f"AR coefficients are non-stationary (spectral radius {radius:.3f})"
                )


def synth_series(params: SynthParams, seed: int) -> SeriesFrame:
    """Deterministic synthetic series; same (params, seed) gives identical bits."""
    n = params.n
    ss = np.random.SeedSequence(seed)
    noise_rng, spike_rng = (np.random.default_rng(c) for c in ss.spawn(2))

    t_idx = np.arange(n, dtype=np.float64)
    seasonal = params.daily_amp * np.sin(2.0 * np.pi * t_idx / params.daily_period)
    seasonal += params.weekly_amp * np.sin(2.0 * np.pi * t_idx / params.weekly_period)

    eps = noise_rng.normal(0.0, params.noise_scale, n)
    z = np.zeros(n)
    p = len(params.ar)
    for t in range(n):
        acc = eps[t]
        for i in range(min(p, t)):
            acc += params.ar[i] * z[t - 1 - i]
        z[t] = acc

    gate = spike_rng.random(n) < params.spike_prob
    shock = spike_rng.normal(0.0, params.spike_scale, n)
    spikes = np.where(gate, shock, 0.0)

    start = parse_timestamp(params.start)
    times = start + np.arange(n, dtype=np.int64) * (params.period_minutes * 60)
    return SeriesFrame(times=times, target=params.mean + seasonal + z + spikes)
