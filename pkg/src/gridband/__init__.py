"""gridband: probabilistic electricity-price forecasting and battery trading.

Quantile regression, conformal prediction intervals, forecast combination,
evaluation metrics, and battery-arbitrage strategies behind a rolling-origin
backtest harness.
"""

__version__ = "0.1.0"

from .combine import ForecastPool, q_ens, qra_run
from .conformal import (
    IntervalSeries,
    PredictionInterval,
    ResidualBuffer,
    enbpi_grid,
    enbpi_run,
    scp_grid,
    scp_run,
    spci_grid,
    spci_run,
)
from .config import RunConfig, config_hash, load_config
from .dataset import (
    CsvSchema,
    DesignMatrix,
    LagSpec,
    SeriesFrame,
    SynthParams,
    build_features,
    load_csv,
    rolling_splits,
    synth_series,
)
from .errors import (
    ConfigError,
    DataError,
    FeasibilityError,
    GridbandError,
    GridbandWarning,
    ShapeError,
)
from .metrics import EvalReport, aps, build_report, coverage, winkler
from .quantile import (
    DECILES,
    QuantileForecast,
    QuantileGrid,
    empirical_quantile,
    fit_linear_qr,
    pinball,
    rearrange,
    weighted_quantile,
)
from .trading import (
    BatteryConfig,
    TradeLedger,
    TradePlan,
    brute_force_plan,
    settle,
    ts1_plan,
    ts2_plan,
    validate_plan,
)

__all__ = [
    "__version__",
    "BatteryConfig",
    "ConfigError",
    "CsvSchema",
    "DECILES",
    "DataError",
    "DesignMatrix",
    "EvalReport",
    "FeasibilityError",
    "ForecastPool",
    "GridbandError",
    "GridbandWarning",
    "IntervalSeries",
    "LagSpec",
    "PredictionInterval",
    "QuantileForecast",
    "QuantileGrid",
    "ResidualBuffer",
    "RunConfig",
    "SeriesFrame",
    "ShapeError",
    "SynthParams",
    "TradeLedger",
    "TradePlan",
    "aps",
    "brute_force_plan",
    "build_features",
    "build_report",
    "config_hash",
    "coverage",
    "empirical_quantile",
    "enbpi_grid",
    "enbpi_run",
    "fit_linear_qr",
    "load_config",
    "load_csv",
    "pinball",
    "q_ens",
    "qra_run",
    "rearrange",
    "rolling_splits",
    "scp_grid",
    "scp_run",
    "settle",
    "spci_grid",
    "spci_run",
    "synth_series",
    "ts1_plan",
    "ts2_plan",
    "validate_plan",
    "weighted_quantile",
    "winkler",
]
