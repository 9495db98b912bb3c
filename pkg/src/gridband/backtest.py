"""Rolling-origin backtest harness: data to forecasts to report to trades.

All artifacts are plain CSV/JSON, written atomically, stamped with the
config hash, and byte-reproducible from (config, seed).
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, replace

import numpy as np

from . import conformal as _cf
from .combine import ForecastPool, q_ens, qra_run
from .config import RunConfig, config_hash
from .dataset import (
    DesignMatrix,
    SeriesFrame,
    build_features,
    format_timestamp,
    load_csv,
    parse_timestamp,
    rolling_splits,
    synth_series,
)
from .errors import AlignmentError, ConfigError, DataError
from .learners import fit_point, predict_point
from .metrics import EvalReport, build_report
from .quantile import QuantileForecast, QuantileGrid, fit_linear_qr, rearrange
from .trading import BatteryConfig, TradeLedger, TradePlan, settle, ts1_plan, ts2_plan

log = logging.getLogger("gridband")

MIN_TRAIN_ROWS = 32
QR_LEARNER_LABEL = "linear"


# --- file plumbing -----------------------------------------------------------


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def forecast_csv_text(fc: QuantileForecast, cfg_hash: str) -> str:
    if fc.times is None:
        raise AlignmentError("cannot persist a forecast without timestamps")
    lines = [f"# config_hash: {cfg_hash}", "timestamp,level,value"]
    for t in range(fc.n_steps):
        stamp = format_timestamp(fc.times[t])
        for j, level in enumerate(fc.grid.levels):
            lines.append(f"{stamp},{level!r},{float(fc.values[t, j])!r}")
    return "\n".join(lines) + "\n"


def parse_forecast_csv(path) -> QuantileForecast:
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"forecast file not found: {path}") from None
    with fh:
        rows: dict[int, dict[float, float]] = {}
        levels: set[float] = set()
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if row[0] == "timestamp":
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected timestamp,level,value")
            try:
                t = parse_timestamp(row[0])
                level = float(row[1])
                value = float(row[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable forecast row") from None
            rows.setdefault(t, {})[level] = value
            levels.add(level)
    if not rows:
        raise DataError(f"{path}: no forecast rows")
    grid = QuantileGrid(tuple(sorted(levels)))
    times = np.asarray(sorted(rows), dtype=np.int64)
    values = np.empty((times.size, len(grid.levels)))
    for i, t in enumerate(times):
        per = rows[int(t)]
        for j, level in enumerate(grid.levels):
            if level not in per:
                raise DataError(
                    f"{path}: level {level} missing at {format_timestamp(t)}"
                )
            values[i, j] = per[level]
    return QuantileForecast(grid=grid, values=values, times=times)


def truths_csv_text(times: np.ndarray, prices: np.ndarray, cfg_hash: str) -> str:
    lines = [f"# config_hash: {cfg_hash}", "timestamp,price"]
    for t, p in zip(times, prices):
        lines.append(f"{format_timestamp(int(t))},{float(p)!r}")
    return "\n".join(lines) + "\n"


def parse_truths_csv(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"truth file not found: {path}") from None
    with fh:
        times: list[int] = []
        prices: list[float] = []
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#") or row[0] == "timestamp":
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected timestamp,price")
            try:
                times.append(parse_timestamp(row[0]))
                prices.append(float(row[1]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable truth row") from None
    if not times:
        raise DataError(f"{path}: no truth rows")
    order = np.argsort(np.asarray(times, dtype=np.int64), kind="stable")
    return (
        np.asarray(times, dtype=np.int64)[order],
        np.asarray(prices, dtype=np.float64)[order],
    )


def frame_csv_text(frame: SeriesFrame, cfg_hash: str) -> str:
    names = sorted(frame.covariates)
    lines = [f"# config_hash: {cfg_hash}"]
    lines.append(",".join(["timestamp", frame.target_name, *names]))
    for i in range(frame.length):
        cells = [format_timestamp(frame.times[i]), repr(float(frame.target[i]))]
        cells += [repr(float(frame.covariates[n][i])) for n in names]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# --- frame and window selection ----------------------------------------------


def load_frame(cfg: RunConfig) -> SeriesFrame:
    data = cfg.raw["data"]
    if "csv" in data:
        return load_csv(data["csv"]["path"], cfg.csv_schema())
    return synth_series(cfg.synth_params(), cfg.seed)


@dataclass(frozen=True)
class _Window:
    index: int
    train: DesignMatrix
    test: DesignMatrix


def _design_windows(
    frame: SeriesFrame, dm: DesignMatrix, cfg: RunConfig
) -> list[_Window]:
    bt = cfg.backtest
    splits = rolling_splits(
        frame, int(bt["train_len"]), int(bt["step"]), int(bt["horizon"])
    )
    period = frame.period_seconds
    s0 = int((dm.target_times[0] - frame.times[0]) // period)
    s1 = int((dm.target_times[-1] - frame.times[0]) // period)
    windows: list[_Window] = []
    for k, (tr, te) in enumerate(splits):
        if te.start < s0 or te.stop > s1 + 1:
            log.info("window %d skipped: test rows outside the feature range", k)
            continue
        lo = max(tr.start, s0)
        n_train = tr.stop - lo
        if n_train < MIN_TRAIN_ROWS:
            log.info("window %d skipped: only %d training rows", k, n_train)
            continue
        windows.append(
            _Window(
                index=k,
                train=dm.subset(slice(lo - s0, tr.stop - s0)),
                test=dm.subset(slice(te.start - s0, te.stop - s0)),
            )
        )
    if not windows:
        raise DataError(
            "no usable backtest windows; extend the series or shrink train_len/lags"
        )
    return windows


# --- per-window method runners -----------------------------------------------


def _qr_forecast(train: DesignMatrix, test: DesignMatrix, grid: QuantileGrid) -> QuantileForecast:
    values = np.empty((test.n_rows, len(grid.levels)))
    for j, level in enumerate(grid.levels):
        model = fit_linear_qr(train, level)
        values[:, j] = model.predict(test.rows)
    return rearrange(QuantileForecast(grid=grid, values=values, times=test.target_times))


def _scp_split(train: DesignMatrix, calib_frac: float) -> tuple[DesignMatrix, DesignMatrix]:
    n = train.n_rows
    c = max(1, int(round(n * calib_frac)))
    if n - c < 1:
        raise ConfigError("calib_frac leaves no proper-training rows")
    return train.subset(slice(0, n - c)), train.subset(slice(n - c, n))


def _concat_dm(a: DesignMatrix, b: DesignMatrix) -> DesignMatrix:
    return DesignMatrix(
        rows=np.vstack([a.rows, b.rows]),
        targets=np.concatenate([a.targets, b.targets]),
        feature_names=a.feature_names,
        target_times=np.concatenate([a.target_times, b.target_times]),
    )


def _qra_regions(train: DesignMatrix, cfg: RunConfig, n_members: int) -> tuple[DesignMatrix, DesignMatrix, int]:
    n = train.n_rows
    c_len = min(int(cfg.combine["calib_len"]), n - 16)
    if c_len < n_members + 2:
        raise ConfigError(
            f"combine.calib_len leaves {c_len} calibration steps; "
            f"at least {n_members + 2} are needed for {n_members} members"
        )
    return train.subset(slice(0, n - c_len)), train.subset(slice(n - c_len, n)), c_len


def _qra_r(
    kind: str,
    params: dict,
    train: DesignMatrix,
    test: DesignMatrix,
    grid: QuantileGrid,
    cfg: RunConfig,
    seed: int,
) -> QuantileForecast:
    fractions = [float(f) for f in cfg.combine["qra_r_windows"]]
    if not fractions:
        raise ConfigError("combine.qra_r_windows is empty")
    fit_dm, calib_dm, c_len = _qra_regions(train, cfg, len(fractions))
    n_fit = fit_dm.n_rows
    cols = []
    labels = []
    for m, frac in enumerate(fractions):
        if not 0.0 < frac <= 1.0:
            raise ConfigError(f"qra_r window fraction must be in (0, 1], got {frac}")
        start = n_fit - max(2, int(round(frac * n_fit)))
        member = fit_point(kind, fit_dm.subset(slice(start, n_fit)), params, seed + 7919 * (m + 1))
        cols.append(
            np.concatenate(
                [predict_point(member, calib_dm.rows), predict_point(member, test.rows)]
            )
        )
        labels.append(f"w{int(round(frac * 100))}")
    pool = ForecastPool(
        times=np.concatenate([calib_dm.target_times, test.target_times]),
        members=np.column_stack(cols),
        labels=tuple(labels),
        truths=calib_dm.targets,
    )
    return qra_run(pool, grid, c_len)


def _qra_cp(
    kind: str,
    params: dict,
    train: DesignMatrix,
    test: DesignMatrix,
    grid: QuantileGrid,
    cfg: RunConfig,
    seed: int,
) -> QuantileForecast:
    fit_dm, calib_dm, c_len = _qra_regions(train, cfg, 3)
    both = _concat_dm(calib_dm, test)
    scp_model = fit_point(kind, fit_dm, params, seed + 11)
    scp_center = predict_point(scp_model, both.rows)
    state = _cf._enbpi_state(
        kind, fit_dm, both, int(cfg.conformal["B"]), params, seed + 13,
        jobs=int(cfg.backtest["jobs"]),
    )
    enbpi_center = state.pred_test.mean(axis=0)
    spci_model = fit_point(kind, fit_dm, params, seed + 17)
    spci_center = predict_point(spci_model, both.rows)
    pool = ForecastPool(
        times=both.target_times,
        members=np.column_stack([scp_center, enbpi_center, spci_center]),
        labels=("scp", "enbpi", "spci"),
        truths=calib_dm.targets,
    )
    return qra_run(pool, grid, c_len)


def _window_forecasts(
    window: _Window, cfg: RunConfig, grid: QuantileGrid, base_seed: int
) -> dict[tuple[str, str], QuantileForecast]:
    bt = cfg.backtest
    cf = cfg.conformal
    out: dict[tuple[str, str], QuantileForecast] = {}
    methods = cfg.methods
    qr_fc = None
    if "qr" in methods:
        qr_fc = _qr_forecast(window.train, window.test, grid)
        out[("qr", QR_LEARNER_LABEL)] = qr_fc
    for kind in sorted(cfg.learners):
        params = dict(cfg.learners[kind] or {})
        enbpi_fc = None
        spci_fc = None
        if "scp" in methods:
            proper, calib = _scp_split(window.train, float(bt["calib_frac"]))
            out[("scp", kind)] = _cf.scp_grid(
                kind, proper, calib, window.test, grid, params, base_seed + 1
            )
        if "enbpi" in methods:
            enbpi_fc = _cf.enbpi_grid(
                kind,
                window.train,
                window.test,
                int(cf["B"]),
                grid,
                params,
                base_seed + 2,
                agg=str(cf["agg"]),
                jobs=int(bt["jobs"]),
            )
            out[("enbpi", kind)] = enbpi_fc
        if "spci" in methods:
            spci_fc = _cf.spci_grid(
                kind,
                window.train,
                window.test,
                grid,
                window=int(cf["window"]),
                resid_lags=int(cf["resid_lags"]),
                qrf_params=dict(cf["spci_qrf"] or {}),
                base_params=params,
                seed=base_seed + 3,
                mode=str(cf["mode"]),
                refit_every=int(cf["refit_every"]),
                convention=cfg.convention,
            )
            out[("spci", kind)] = spci_fc
        if "qra_r" in methods:
            out[("qra_r", kind)] = _qra_r(
                kind, params, window.train, window.test, grid, cfg, base_seed + 4
            )
        if "qra_cp" in methods:
            out[("qra_cp", kind)] = _qra_cp(
                kind, params, window.train, window.test, grid, cfg, base_seed + 5
            )
        if "q_ens" in methods:
            out[("q_ens", kind)] = q_ens(qr_fc, enbpi_fc, spci_fc)
    return out


# --- commands ----------------------------------------------------------------


@dataclass(frozen=True)
class BacktestResult:
    report: EvalReport
    runs: dict
    truth_times: np.ndarray
    truths: np.ndarray
    out_dir: str


def run_backtest(cfg: RunConfig) -> BacktestResult:
    grid = cfg.grid()
    frame = load_frame(cfg)
    dm = build_features(frame, cfg.lag_spec(), int(cfg.backtest["horizon"]))
    windows = _design_windows(frame, dm, cfg)
    log.info("backtest over %d windows on backend data of %d rows", len(windows), frame.length)

    pieces: dict[tuple[str, str], list[QuantileForecast]] = {}
    truth_times: list[np.ndarray] = []
    truths: list[np.ndarray] = []
    for w in windows:
        base_seed = cfg.seed + 100000 * (w.index + 1)
        for key, fc in _window_forecasts(w, cfg, grid, base_seed).items():
            pieces.setdefault(key, []).append(fc)
        truth_times.append(w.test.target_times)
        truths.append(w.test.targets)

    runs = {
        key: QuantileForecast(
            grid=grid,
            values=np.vstack([p.values for p in parts]),
            times=np.concatenate([p.times for p in parts]),
        )
        for key, parts in pieces.items()
    }
    t_times = np.concatenate(truth_times)
    t_vals = np.concatenate(truths)
    report = build_report(runs, t_vals)

    h = config_hash(cfg)
    out = cfg.output_dir
    for (method, learner), fc in sorted(runs.items()):
        atomic_write_text(
            os.path.join(out, "forecasts", f"{method}__{learner}.csv"),
            forecast_csv_text(fc, h),
        )
    atomic_write_text(os.path.join(out, "truths.csv"), truths_csv_text(t_times, t_vals, h))
    atomic_write_text(os.path.join(out, "report.csv"), report.to_csv_text(h))
    atomic_write_text(os.path.join(out, "report.json"), report.to_json_text(h))
    return BacktestResult(
        report=report, runs=runs, truth_times=t_times, truths=t_vals, out_dir=out
    )


def run_evaluate(cfg: RunConfig, forecasts_dir: str | None = None) -> EvalReport:
    """Rebuild the report from persisted forecast files; the outcome matches
    the in-memory report bit for bit."""
    out = cfg.output_dir
    fdir = forecasts_dir or os.path.join(out, "forecasts")
    t_times, t_vals = parse_truths_csv(os.path.join(out, "truths.csv"))
    runs: dict[tuple[str, str], QuantileForecast] = {}
    if not os.path.isdir(fdir):
        raise DataError(f"forecast directory not found: {fdir}")
    for name in sorted(os.listdir(fdir)):
        if not name.endswith(".csv") or "__" not in name:
            continue
        method, learner = name[:-4].split("__", 1)
        fc = parse_forecast_csv(os.path.join(fdir, name))
        if not np.array_equal(fc.times, t_times):
            raise AlignmentError(f"{name} covers a different region than the truths")
        runs[(method, learner)] = fc
    if not runs:
        raise DataError(f"no forecast files in {fdir}")
    report = build_report(runs, t_vals)
    h = config_hash(cfg)
    atomic_write_text(os.path.join(out, "report.csv"), report.to_csv_text(h))
    atomic_write_text(os.path.join(out, "report.json"), report.to_json_text(h))
    return report


# --- trading orchestration ---------------------------------------------------


def _blocks(times: np.ndarray, block_len: int) -> list[slice]:
    """Consecutive runs of uniformly spaced timestamps, chunked into full
    blocks; partial tails and gap-spanning chunks are dropped."""
    n = times.size
    if n < block_len:
        return []
    diffs = np.diff(times)
    period = int(diffs.min()) if diffs.size else 0
    blocks = []
    seg_start = 0
    for i in range(1, n + 1):
        if i == n or diffs[i - 1] != period:
            seg_len = i - seg_start
            for b in range(seg_len // block_len):
                lo = seg_start + b * block_len
                blocks.append(slice(lo, lo + block_len))
            seg_start = i
    return blocks


def _plan_for(
    strategy: str,
    fc: QuantileForecast,
    battery: BatteryConfig,
    cfg: RunConfig,
) -> TradePlan:
    td = cfg.trading
    if strategy == "ts1":
        return ts1_plan(
            fc, battery, risk_filter=bool(td["risk_filter"]), act_level=float(td["act_level"])
        )
    return ts2_plan(
        fc,
        battery,
        soc_steps=int(td["soc_steps"]),
        buy_level=float(td["buy_level"]),
        sell_level=float(td["sell_level"]),
    )


def _run_block(
    strategy: str,
    fc: QuantileForecast,
    realized: np.ndarray,
    battery: BatteryConfig,
    cfg: RunConfig,
) -> TradeLedger:
    if cfg.trading["mode"] == "commit":
        return settle(_plan_for(strategy, fc, battery, cfg), realized, battery)
    # receding horizon: re-plan every period, execute only the first action
    records = []
    profit = 0.0
    soc = battery.initial_soc
    H = fc.n_steps
    for r in range(H):
        remaining = QuantileForecast(
            grid=fc.grid, values=fc.values[r:], times=fc.times[r:] if fc.times is not None else None
        )
        now = replace(battery, initial_soc=soc)
        if strategy == "ts1" and remaining.n_steps < 2:
            continue
        plan = _plan_for(strategy, remaining, now, cfg)
        first = plan.steps[0]
        if first.action == "idle":
            continue
        step_ledger = settle(
            TradePlan(steps=(first,), planned_profit=0.0), realized[r : r + 1], now
        )
        for rec in step_ledger.records:
            records.append(replace(rec, period=r))
            soc = rec.soc_after
            profit += rec.cash
    return TradeLedger(records=tuple(records), profit=profit)


def run_trade(cfg: RunConfig, forecasts_dir: str | None = None) -> dict:
    out = cfg.output_dir
    fdir = forecasts_dir or os.path.join(out, "forecasts")
    t_times, prices = parse_truths_csv(os.path.join(out, "truths.csv"))
    battery = cfg.battery()
    block_len = 24 if cfg.backtest["market"] == "dam" else 16
    strategies = [str(s) for s in cfg.trading["strategies"]]
    h = config_hash(cfg)

    keys: list[tuple[str, str]] = []
    for method in cfg.methods:
        if method == "qr":
            keys.append((method, QR_LEARNER_LABEL))
        else:
            keys.extend((method, kind) for kind in sorted(cfg.learners))

    summary_rows = []
    for method, learner in sorted(set(keys)):
        path = os.path.join(fdir, f"{method}__{learner}.csv")
        fc = parse_forecast_csv(path)
        if not np.array_equal(fc.times, t_times):
            raise DataError(f"{path} does not cover the settlement timestamps")
        blocks = _blocks(fc.times, block_len)
        if not blocks:
            raise DataError(
                f"{path}: no full {block_len}-period windows available to trade"
            )
        for strategy in sorted(strategies):
            lines = [
                f"# config_hash: {h}",
                "window_start,period,side,grid_energy_mwh,price,cash,soc_after",
            ]
            profit = 0.0
            for sl in blocks:
                fc_block = QuantileForecast(
                    grid=fc.grid, values=fc.values[sl], times=fc.times[sl]
                )
                ledger = _run_block(strategy, fc_block, prices[sl], battery, cfg)
                start = format_timestamp(fc.times[sl.start])
                for rec in ledger.records:
                    lines.append(
                        f"{start},{rec.period},{rec.side},{float(rec.grid_energy)!r},"
                        f"{float(rec.price)!r},{float(rec.cash)!r},{float(rec.soc_after)!r}"
                    )
                profit += ledger.profit
            atomic_write_text(
                os.path.join(out, "trades", f"{method}__{learner}__{strategy}.csv"),
                "\n".join(lines) + "\n",
            )
            summary_rows.append(
                {
                    "method": method,
                    "learner": learner,
                    "strategy": strategy,
                    "market": str(cfg.backtest["market"]),
                    "profit": profit,
                    "windows": len(blocks),
                }
            )

    lines = [f"# config_hash: {h}", "method,learner,strategy,market,profit,windows"]
    for r in summary_rows:
        lines.append(
            f"{r['method']},{r['learner']},{r['strategy']},{r['market']},"
            f"{float(r['profit'])!r},{r['windows']}"
        )
    atomic_write_text(os.path.join(out, "trade_summary.csv"), "\n".join(lines) + "\n")
    return {"summary": summary_rows, "out_dir": out}
