"""Run configuration: YAML file merged over defaults, dotted-key overrides,
validation, and the canonical hash stamped into every output file."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import yaml

from .dataset import CsvSchema, LagSpec, SynthParams
from .errors import ConfigError
from .quantile import QuantileGrid
from .trading import BatteryConfig

METHODS = ("qr", "scp", "enbpi", "spci", "qra_r", "qra_cp", "q_ens")
METHOD_DEPS = {
    "q_ens": ("qr", "enbpi", "spci"),
    "qra_cp": ("scp", "enbpi", "spci"),
}
LEARNER_KINDS = ("knn", "lear", "forest", "boost")

DEFAULTS: dict = {
    "seed": None,
    "output_dir": "out",
    "data": {
        "synth": {
            "n": 2000,
            "period_minutes": 60,
            "start": "2024-01-01T00:00:00Z",
            "mean": 50.0,
            "ar": [0.4, 0.2],
            "noise_scale": 4.0,
            "daily_amp": 8.0,
            "weekly_amp": 3.0,
            "daily_period": 24,
            "weekly_period": 168,
            "spike_prob": 0.01,
            "spike_scale": 40.0,
        }
    },
    "features": {
        "target_lags": [24, 48, 168],
        "covariate_lags": {},
        "lead": 24,
    },
    "grid": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "learners": {"lear": {}},
    "methods": ["qr", "scp"],
    "backtest": {
        "train_len": 720,
        "step": 24,
        "horizon": 24,
        "market": "dam",
        "calib_frac": 0.25,
        "jobs": 1,
    },
    "conformal": {
        "B": 25,
        "agg": "paper",
        "window": 200,
        "resid_lags": 8,
        "refit_every": 1,
        "mode": "signed",
        "spci_qrf": {},
    },
    "combine": {"calib_len": 168, "qra_r_windows": [1.0, 0.25, 0.5]},
    "quantile": {"convention": "conformal"},
    "battery": {
        "capacity": 1.0,
        "max_charge": 1.0,
        "max_discharge": 1.0,
        "eta_c": 0.98,
        "eta_d": 0.8,
        "min_soc": 0.0,
        "initial_soc": 0.0,
    },
    "trading": {
        "strategies": ["ts1", "ts2"],
        "soc_steps": 11,
        "risk_filter": False,
        "act_level": 0.1,
        "mode": "commit",
        "buy_level": 0.5,
        "sell_level": 0.5,
    },
}


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def _set_dotted(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            node[part] = nxt
        node = nxt
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    """Parse a ``key.path=value`` override; the value is read as YAML so
    numbers, booleans, and lists work."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {text!r} has an unparseable value: {exc}") from None
    return key, value


@dataclass(frozen=True)
class RunConfig:
    """Validated effective configuration (defaults + file + overrides)."""

    raw: dict

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output_dir(self) -> str:
        return str(self.raw["output_dir"])

    @property
    def methods(self) -> tuple[str, ...]:
        return tuple(self.raw["methods"])

    @property
    def learners(self) -> dict:
        return self.raw["learners"]

    @property
    def backtest(self) -> dict:
        return self.raw["backtest"]

    @property
    def conformal(self) -> dict:
        return self.raw["conformal"]

    @property
    def combine(self) -> dict:
        return self.raw["combine"]

    @property
    def trading(self) -> dict:
        return self.raw["trading"]

    @property
    def convention(self) -> str:
        return str(self.raw["quantile"]["convention"])

    def grid(self) -> QuantileGrid:
        return QuantileGrid(tuple(float(x) for x in self.raw["grid"]))

    def lag_spec(self) -> LagSpec:
        f = self.raw["features"]
        return LagSpec(
            target_lags=tuple(int(k) for k in f["target_lags"]),
            covariate_lags={
                str(name): tuple(int(k) for k in lags)
                for name, lags in dict(f.get("covariate_lags") or {}).items()
            },
            lead=int(f["lead"]),
        )

    def battery(self) -> BatteryConfig:
        b = self.raw["battery"]
        return BatteryConfig(
            capacity=float(b["capacity"]),
            max_charge=float(b["max_charge"]),
            max_discharge=float(b["max_discharge"]),
            eta_c=float(b["eta_c"]),
            eta_d=float(b["eta_d"]),
            min_soc=float(b["min_soc"]),
            initial_soc=float(b["initial_soc"]),
        )

    def synth_params(self) -> SynthParams:
        s = self.raw["data"]["synth"]
        return SynthParams(
            n=int(s["n"]),
            period_minutes=int(s["period_minutes"]),
            start=str(s["start"]),
            mean=float(s["mean"]),
            ar=tuple(float(a) for a in (s["ar"] or ())),
            noise_scale=float(s["noise_scale"]),
            daily_amp=float(s["daily_amp"]),
            weekly_amp=float(s["weekly_amp"]),
            daily_period=int(s["daily_period"]),
            weekly_period=int(s["weekly_period"]),
            spike_prob=float(s["spike_prob"]),
            spike_scale=float(s["spike_scale"]),
        )

    def csv_schema(self) -> CsvSchema:
        c = self.raw["data"]["csv"]
        cov = c.get("covariates")
        return CsvSchema(
            timestamp=str(c.get("timestamp", "timestamp")),
            target=str(c.get("target", "price")),
            covariates=tuple(cov) if cov is not None else None,
            missing=str(c.get("missing", "reject")),
        )


def config_hash(cfg: RunConfig) -> str:
    """sha256 of the canonical JSON form of the effective config."""
    canon = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _validate(raw: dict) -> None:
    if raw.get("seed") is None:
        raise ConfigError("config key 'seed' is mandatory")
    data = raw.get("data") or {}
    sources = [k for k in ("csv", "synth") if k in data]
    if len(sources) != 1:
        raise ConfigError("config key 'data' must name exactly one of csv or synth")
    if "csv" in data and not data["csv"].get("path"):
        raise ConfigError("data.csv.path is required for csv sources")

    methods = raw.get("methods") or []
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
    for m, deps in METHOD_DEPS.items():
        if m in methods:
            missing = [d for d in deps if d not in methods]
            if missing:
                raise ConfigError(
                    f"method {m!r} requires {missing} in the methods list"
                )
    if not methods:
        raise ConfigError("methods list is empty")

    learners = raw.get("learners") or {}
    if not learners:
        raise ConfigError("learners map is empty")
    for kind in learners:
        if kind not in LEARNER_KINDS:
            raise ConfigError(
                f"unknown learner kind {kind!r}; expected one of {LEARNER_KINDS}"
            )

    bt = raw["backtest"]
    for key in ("train_len", "step", "horizon"):
        if int(bt[key]) < 1:
            raise ConfigError(f"backtest.{key} must be >= 1, got {bt[key]}")
    if int(bt["step"]) < int(bt["horizon"]):
        raise ConfigError(
            "backtest.step must be >= backtest.horizon so evaluation windows "
            "do not overlap"
        )
    if bt["market"] not in ("dam", "bm"):
        raise ConfigError(f"backtest.market must be dam or bm, got {bt['market']!r}")
    if not 0.0 < float(bt["calib_frac"]) < 1.0:
        raise ConfigError("backtest.calib_frac must be in (0, 1)")
    if int(bt["jobs"]) < 1:
        raise ConfigError("backtest.jobs must be >= 1")

    grid = QuantileGrid(tuple(float(x) for x in raw["grid"]))
    if all(abs(x - 0.5) > 1e-9 for x in grid.levels):
        raise ConfigError("the quantile grid must contain the median level 0.5")

    feats = raw["features"]
    lead = int(feats["lead"])
    if lead < int(bt["horizon"]):
        raise ConfigError(
            f"features.lead ({lead}) must be >= backtest.horizon ({bt['horizon']}); "
            "shorter lags would read targets that are unobserved at forecast time"
        )

    conv = raw["quantile"]["convention"]
    if conv not in ("higher", "conformal", "linear"):
        raise ConfigError(f"unknown quantile convention {conv!r}")

    cf = raw["conformal"]
    if int(cf["B"]) < 1:
        raise ConfigError("conformal.B must be >= 1")
    if cf["agg"] not in ("paper", "oob"):
        raise ConfigError("conformal.agg must be paper or oob")
    if cf["mode"] not in ("signed", "symmetric"):
        raise ConfigError("conformal.mode must be signed or symmetric")

    td = raw["trading"]
    for s in td["strategies"]:
        if s not in ("ts1", "ts2"):
            raise ConfigError(f"unknown strategy {s!r}; expected ts1 or ts2")
    if td["mode"] not in ("commit", "receding"):
        raise ConfigError("trading.mode must be commit or receding")
    if int(td["soc_steps"]) < 2:
        raise ConfigError("trading.soc_steps must be >= 2")

    # constructor runs the battery invariants
    b = raw["battery"]
    BatteryConfig(
        capacity=float(b["capacity"]),
        max_charge=float(b["max_charge"]),
        max_discharge=float(b["max_discharge"]),
        eta_c=float(b["eta_c"]),
        eta_d=float(b["eta_d"]),
        min_soc=float(b["min_soc"]),
        initial_soc=float(b["initial_soc"]),
    )


def load_config(path=None, overrides=()) -> RunConfig:
    """Build the effective config: defaults, then the YAML file, then dotted
    overrides, then validation."""
    raw = json.loads(json.dumps(DEFAULTS))  # deep copy via round-trip
    if path is not None:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config root must be a mapping")
        raw = _deep_merge(raw, loaded)
    for text in overrides:
        key, value = parse_override(text)
        _set_dotted(raw, key, value)
    _validate(raw)
    return RunConfig(raw=raw)
