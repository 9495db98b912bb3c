"""Command-line entry points.

Exit codes: 0 success, 2 configuration problems, 3 data problems,
4 anything else that went wrong inside the toolkit.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .backtest import (
    atomic_write_text,
    frame_csv_text,
    load_frame,
    run_backtest,
    run_evaluate,
    run_trade,
)
from .config import config_hash, load_config
from .errors import ConfigError, DataError, GridbandError

log = logging.getLogger("gridband")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _setup_logging() -> None:
    level_name = os.environ.get("GRIDBAND_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s"
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="YAML config file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config entry by dotted path, e.g. backtest.horizon=12",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridband",
        description="Probabilistic electricity-price forecasting and battery trading.",
    )
    parser.add_argument("--version", action="version", version=f"gridband {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic price series as CSV")
    _add_common(p)
    p.add_argument("--out", metavar="PATH", help="output file (default: <output_dir>/synth.csv)")

    p = sub.add_parser("backtest", help="run the rolling-origin forecasting backtest")
    _add_common(p)

    p = sub.add_parser("evaluate", help="rebuild the evaluation report from saved forecasts")
    _add_common(p)
    p.add_argument("--forecasts", metavar="DIR", help="forecast directory (default: <output_dir>/forecasts)")

    p = sub.add_parser("trade", help="settle battery trading strategies on saved forecasts")
    _add_common(p)
    p.add_argument("--forecasts", metavar="DIR", help="forecast directory (default: <output_dir>/forecasts)")

    return parser


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.overrides)
    frame = load_frame(cfg)
    out = args.out or os.path.join(cfg.output_dir, "synth.csv")
    atomic_write_text(out, frame_csv_text(frame, config_hash(cfg)))
    print(f"wrote {frame.length} rows to {out}")
    return EXIT_OK


def cmd_backtest(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.overrides)
    result = run_backtest(cfg)
    print(f"evaluated {result.truths.size} forecast steps")
    for row in result.report.rows:
        print(
            f"{row.method}/{row.learner} {row.level_pair}: "
            f"coverage={row.coverage:.3f} width={row.mean_width:.3f} "
            f"winkler={row.winkler:.3f}"
        )
    print(f"artifacts in {result.out_dir}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.overrides)
    report = run_evaluate(cfg, args.forecasts)
    sys.stdout.write(report.to_csv_text(config_hash(cfg)))
    return EXIT_OK


def cmd_trade(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.overrides)
    result = run_trade(cfg, args.forecasts)
    for row in result["summary"]:
        print(
            f"{row['method']}/{row['learner']} {row['strategy']}: "
            f"profit={row['profit']:.4f} over {row['windows']} windows"
        )
    print(f"ledgers in {os.path.join(result['out_dir'], 'trades')}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "backtest": cmd_backtest,
    "evaluate": cmd_evaluate,
    "trade": cmd_trade,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GridbandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("unexpected failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
