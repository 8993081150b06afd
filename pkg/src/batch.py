# src/batch.py

import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Sequence, Tuple

import pandas as pd

from .loader import CLI_SOURCE, ConfigError, Diagnostic, Entry, ScenarioConfig, parse_override, resolve
from .report import COLUMNS, make_report_row
from .scenario import run_scenario
from .schema import ReportRow

logger = logging.getLogger(__name__)

# Short axis names accepted by --sweep
AXIS_ALIASES: Dict[str, str] = {
    "d_th": "lre.d_th",
    "scheme": "lre.scheme",
    "rx_policy": "lre.rx_policy",
    "env": "environment.name",
    "environment": "environment.name",
    "traffic": "traffic.profile",
    "direction": "run.direction",
    "seed": "run.seed",
}

Axis = Tuple[str, List[str]]


def parse_axis(text: str) -> Axis:
    """
    Parse one sweep axis.

    Examples:
        "d_th=0..7"            --> ("lre.d_th", ["0", ..., "7"])
        "scheme=rda-q,rda-r"   --> ("lre.scheme", ["rda-q", "rda-r"])
        "mac.cw_min=15,31"     --> ("mac.cw_min", ["15", "31"])
    """
    key, sep, raw = text.partition("=")
    key = key.strip().lower()
    dotted = AXIS_ALIASES.get(key, key)
    if not sep or not raw.strip():
        raise ConfigError([Diagnostic(CLI_SOURCE, 0, f"sweep must look like key=values, got {text!r}")])
    # validates the key
    parse_override(f"{dotted}=0")

    raw = raw.strip()
    if ".." in raw:
        lo_text, _, hi_text = raw.partition("..")
        try:
            lo, hi = int(lo_text), int(hi_text)
        except ValueError:
            raise ConfigError(
                [Diagnostic(CLI_SOURCE, 0, f"range bounds must be integers, got {raw!r}")]
            ) from None
        if hi < lo:
            raise ConfigError([Diagnostic(CLI_SOURCE, 0, f"empty range {raw!r}")])
        return dotted, [str(v) for v in range(lo, hi + 1)]
    values = [v.strip() for v in raw.split(",") if v.strip()]
    return dotted, values


def expand(base: Sequence[Entry], axes: Sequence[Axis]) -> List[ScenarioConfig]:
    """
    Cartesian product of the axes on top of the base entries, first axis
    slowest. Every combination is validated; all failures are reported
    together.
    """
    configs: List[ScenarioConfig] = []
    problems: List[Diagnostic] = []
    value_lists = [values for _, values in axes]
    for combo in itertools.product(*value_lists):
        entries = list(base)
        for (dotted, _), value in zip(axes, combo):
            section, _, key = dotted.partition(".")
            entries.append(Entry(section, key, value, CLI_SOURCE, 0))
        try:
            configs.append(resolve(entries))
        except ConfigError as exc:
            label = ", ".join(f"{d}={v}" for (d, _), v in zip(axes, combo))
            problems.extend(
                Diagnostic(d.path, d.line, f"[{label}] {d.message}") for d in exc.diagnostics
            )
    if problems:
        raise ConfigError(problems)
    return configs


def run_one(config: ScenarioConfig) -> ReportRow:
    return make_report_row(config, run_scenario(config))


def run_matrix(configs: Sequence[ScenarioConfig], workers: int = 1) -> List[ReportRow]:
    """
    Run every configuration. Rows come back in configuration order whatever
    the number of worker processes.
    """
    total = len(configs)
    logger.info("[MATRIX] %d runs on %d worker(s)", total, workers)
    if workers > 1 and total > 1:
        with ProcessPoolExecutor(max_workers=min(workers, total)) as pool:
            return list(pool.map(run_one, configs))

    rows: List[ReportRow] = []
    for i, config in enumerate(configs, start=1):
        logger.info("[MATRIX] run %d/%d", i, total)
        rows.append(run_one(config))
    return rows


def export_excel(rows: Sequence[ReportRow], path: str) -> str:
    """
    Write matrix results to an Excel workbook.

    Two sheets: `rows` (one line per run, CSV columns) and `configs`
    (the effective configuration of each run, one column per key).
    """
    df_rows = pd.DataFrame(list(rows), columns=COLUMNS)

    config_records = []
    for i, row in enumerate(rows):
        record: Dict[str, object] = {"run": i}
        for item in str(row["effective_config"]).split(";"):
            key, _, value = item.partition("=")
            record[key] = value
        config_records.append(record)
    df_configs = pd.DataFrame(config_records)

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        df_rows.drop(columns=["effective_config"]).to_excel(writer, sheet_name="rows", index=False)
        df_configs.to_excel(writer, sheet_name="configs", index=False)

    return path
