# src/cli.py

import argparse
import logging
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .batch import Axis, expand, export_excel, parse_axis, run_matrix
from .loader import ConfigError, config_entries, effective_config, resolve
from .report import emit_csv, emit_figure_data, make_report_row, render_table
from .scenario import calibrate_disturbance, calibrate_interferer, run_scenario
from .utils import default_workers, load_env, resolve_output_path

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2

# dedicated flag -> config key
FLAG_KEYS: Dict[str, str] = {
    "scheme": "lre.scheme",
    "env": "environment.name",
    "traffic": "traffic.profile",
    "direction": "run.direction",
    "d_th": "lre.d_th",
    "rx_policy": "lre.rx_policy",
    "seed": "run.seed",
    "packets": "run.packets",
    "duration": "run.duration_us",
}


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="scenario file (bare names are looked up in configs/)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override any config key; may be repeated",
    )
    parser.add_argument("--scheme", help="dcf | basic | rda-q | rda-r")
    parser.add_argument("--env", help="benign | hostile")
    parser.add_argument("--traffic", help="c1 | e1 | e05")
    parser.add_argument("--direction", help="uplink | downlink")
    parser.add_argument("--d-th", dest="d_th", help="duplicate deferral threshold")
    parser.add_argument("--rx-policy", dest="rx_policy", help="ordered | unordered")
    parser.add_argument("--seed", help="master seed")
    parser.add_argument("--packets", help="packets to generate")
    parser.add_argument("--duration", help="generation time in microseconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wired-sim",
        description="Discrete-event simulator of seamless redundant Wi-Fi links.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    parser.add_argument("--env-file", help=".env file to load (default: search upwards)")

    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    _add_config_args(p_run)
    p_run.add_argument("--out", help="CSV file the report row is appended to")
    p_run.add_argument("--excel", help="also write an Excel workbook")

    p_matrix = sub.add_parser("matrix", help="run a cartesian sweep of scenarios")
    _add_config_args(p_matrix)
    p_matrix.add_argument(
        "--sweep", action="append", default=[], metavar="KEY=A..B|V1,V2",
        help="sweep axis; comma lists in the dedicated flags are axes too",
    )
    p_matrix.add_argument("--out", default="matrix.csv", help="CSV file (rewritten)")
    p_matrix.add_argument("--figures", help="directory for per-panel d_th sweep CSVs")
    p_matrix.add_argument("--excel", help="also write an Excel workbook")
    p_matrix.add_argument("--workers", type=int, help="worker processes (default $WIRED_WORKERS or 1)")

    p_validate = sub.add_parser("validate", help="check a configuration without running it")
    _add_config_args(p_validate)

    p_cal = sub.add_parser("calibrate", help="measure jammer occupancy and interferer load")
    _add_config_args(p_cal)
    p_cal.add_argument("--cal-duration", type=int, default=100_000_000,
                       help="interferer measurement span in microseconds")
    p_cal.add_argument("--steps", type=int, default=10_000_000,
                       help="jammer steps per environment")

    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")


def _flag_overrides(args: argparse.Namespace, axes_allowed: bool) -> Tuple[List[str], List[Axis]]:
    """
    Turn the dedicated flags into `section.key=value` overrides. In matrix
    mode, values with commas (or a..b ranges) become sweep axes instead.
    """
    overrides = list(args.overrides)
    axes: List[Axis] = []
    for flag, dotted in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if axes_allowed and ("," in value or ".." in value):
            axes.append(parse_axis(f"{dotted}={value}"))
        else:
            overrides.append(f"{dotted}={value}")
    return overrides, axes


def _write_outputs(rows: list, out: Optional[str], excel: Optional[str], append: bool) -> None:
    if out:
        path = emit_csv(rows, resolve_output_path(out), append=append)
        logger.info("[RUN] %d row(s) -> %s", len(rows), path)
    if excel:
        path = export_excel(rows, resolve_output_path(excel))
        logger.info("[RUN] workbook -> %s", path)


def cmd_run(args: argparse.Namespace) -> int:
    overrides, _ = _flag_overrides(args, axes_allowed=False)
    config = resolve(config_entries(args.config, overrides))
    row = make_report_row(config, run_scenario(config))
    print(render_table([row]))
    _write_outputs([row], args.out, args.excel, append=True)
    return EXIT_OK


def cmd_matrix(args: argparse.Namespace) -> int:
    overrides, axes = _flag_overrides(args, axes_allowed=True)
    axes.extend(parse_axis(text) for text in args.sweep)
    configs = expand(config_entries(args.config, overrides), axes)
    workers = args.workers if args.workers is not None else default_workers()
    rows = run_matrix(configs, workers=workers)
    print(render_table(rows))
    _write_outputs(rows, args.out, args.excel, append=False)
    if args.figures:
        emit_figure_data(rows, resolve_output_path(args.figures))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    overrides, _ = _flag_overrides(args, axes_allowed=False)
    config = resolve(config_entries(args.config, overrides))
    for item in effective_config(config).split(";"):
        print(item)
    logger.info("[CONFIG] ok")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    overrides, _ = _flag_overrides(args, axes_allowed=False)
    entries = config_entries(args.config, overrides)

    records = []
    for env in ("benign", "hostile"):
        config = resolve(entries + config_entries(None, [f"environment.name={env}"]))
        result = calibrate_disturbance(config, args.steps)
        records.append({"measurement": f"jammer bad occupancy ({env})",
                        "measured": result["bad_occupancy"],
                        "expected": result["expected_bad_fraction"]})

    config = resolve(entries)
    result = calibrate_interferer(config, args.cal_duration)
    records.append({"measurement": "interferer offered load",
                    "measured": result["measured_load"],
                    "expected": result["expected_load"]})
    print(pd.DataFrame(records).to_string(index=False, float_format=lambda v: f"{v:.5f}"))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "matrix": cmd_matrix,
    "validate": cmd_validate,
    "calibrate": cmd_calibrate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage or help
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    _configure_logging(args)
    load_env(args.env_file)

    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
