# src/report.py

import logging
import math
import os
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from .loader import ScenarioConfig, effective_config
from .schema import ReportRow, RunReport

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

LABEL_COLUMNS = [
    "direction",
    "traffic",
    "environment",
    "scheme",
    "d_th",
    "rx_policy",
    "seed",
    "schema_version",
]

REPORT_COLUMNS = list(RunReport.__annotations__)

COLUMNS = LABEL_COLUMNS + REPORT_COLUMNS + ["effective_config"]

INT_COLUMNS = {
    "d_th", "seed", "schema_version",
    "d_min", "d_p95", "d_p99", "d_p99_5", "d_p99_9", "d_max",
    "generated", "delivered", "lost_overrun", "lost_retry_limit", "lost_reorder_skip",
    "in_flight", "duplicates_discarded", "late_discarded", "aborts", "scrubs",
    "deferrals", "air_attempts_1", "air_attempts_2", "stray_acks",
}

RATIO_COLUMNS = {"p_d_gt_dmin", "p_d_gt_1ms", "p_d_gt_10ms", "p_d_gt_100ms", "p_lost"}

MEAN_COLUMNS = {"d_mean", "d_std", "dq_mean", "dt_mean", "dr_mean", "q_mean_1", "q_mean_2", "q_mean"}


# -------------------------------
# Value rendering
# -------------------------------


def format_ratio(value: float) -> str:
    """Decimal fraction with at least six significant digits, e.g. 0.5 -> 0.500000."""
    if value == 0:
        return "0.000000"
    decimals = max(6, 5 - math.floor(math.log10(abs(value))))
    return f"{value:.{decimals}f}"


def format_value(column: str, value: Any) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if column in INT_COLUMNS:
        return str(int(value))
    if column in RATIO_COLUMNS:
        return format_ratio(float(value))
    if column in MEAN_COLUMNS:
        return f"{float(value):.3f}"
    return str(value)


def parse_value(column: str, text: str) -> Any:
    if column in INT_COLUMNS or column in RATIO_COLUMNS or column in MEAN_COLUMNS:
        if text == "":
            return None
        return int(text) if column in INT_COLUMNS else float(text)
    return text


def make_report_row(config: ScenarioConfig, report: RunReport) -> ReportRow:
    """
    Flatten labels and report into one row. Floating values are quantized
    exactly as the CSV renders them, so rows survive a CSV round trip.
    """
    raw: Dict[str, Any] = {
        "direction": config.run.direction,
        "traffic": config.traffic.profile,
        "environment": config.environment.name,
        "scheme": config.lre.scheme,
        "d_th": config.lre.d_th,
        "rx_policy": config.lre.rx_policy,
        "seed": config.run.seed,
        "schema_version": SCHEMA_VERSION,
        "effective_config": effective_config(config),
    }
    raw.update(report)
    row = {column: parse_value(column, format_value(column, raw[column])) for column in COLUMNS}
    return row  # type: ignore[return-value]


# -------------------------------
# CSV
# -------------------------------


def rows_to_frame(rows: Sequence[ReportRow]) -> pd.DataFrame:
    records = [[format_value(c, row.get(c)) for c in COLUMNS] for row in rows]
    return pd.DataFrame(records, columns=COLUMNS, dtype=str)


def emit_csv(rows: Sequence[ReportRow], path: str, append: bool = False) -> str:
    """
    Write rows as CSV (header first, fixed column order). With `append`,
    rows are added to an existing file without repeating the header.
    """
    if not rows:
        raise ValueError("emit_csv needs at least one row")
    out_dir = os.path.dirname(os.path.abspath(path))
    os.makedirs(out_dir, exist_ok=True)

    appending = append and os.path.exists(path) and os.path.getsize(path) > 0
    if appending:
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().rstrip("\n").split(",")
        if header != COLUMNS:
            raise ValueError(f"{path} has a different column set; refusing to append")

    df = rows_to_frame(rows)
    df.to_csv(
        path,
        index=False,
        header=not appending,
        mode="a" if appending else "w",
        lineterminator="\n",
        encoding="utf-8",
    )
    return path


def parse_csv(path: str) -> List[ReportRow]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Report not found at: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path} lacks columns: {', '.join(missing)}")
    rows: List[ReportRow] = []
    for record in df.to_dict(orient="records"):
        row = {c: parse_value(c, record[c]) for c in COLUMNS}
        rows.append(row)  # type: ignore[arg-type]
    return rows


# -------------------------------
# Human-readable tables
# -------------------------------


def steady_state_table(rows: Sequence[ReportRow]) -> pd.DataFrame:
    """
    Latencies in milliseconds and ratios in per-mille, one line per run,
    laid out like the usual steady-state results table.
    """

    def ms(value: Optional[float]) -> Optional[float]:
        return None if value is None else value / 1000.0

    def permille(value: Optional[float]) -> Optional[float]:
        return None if value is None else value * 1000.0

    lines = []
    for row in rows:
        lines.append({
            "env": row["environment"],
            "traffic": row["traffic"],
            "dir": row["direction"],
            "scheme": row["scheme"],
            "d_th": row["d_th"],
            "d_mean": ms(row["d_mean"]),
            "d_std": ms(row["d_std"]),
            "d_p95": ms(row["d_p95"]),
            "d_p99": ms(row["d_p99"]),
            "d_p99.9": ms(row["d_p99_9"]),
            "d_max": ms(row["d_max"]),
            "P>dmin": permille(row["p_d_gt_dmin"]),
            "P>1": permille(row["p_d_gt_1ms"]),
            "P>10": permille(row["p_d_gt_10ms"]),
            "P>100": permille(row["p_d_gt_100ms"]),
            "P_lost": permille(row["p_lost"]),
            "q[1]": row["q_mean_1"],
            "q[2]": row["q_mean_2"],
        })
    return pd.DataFrame(lines)


def render_table(rows: Sequence[ReportRow]) -> str:
    df = steady_state_table(rows)
    if df.empty:
        return "(no rows)"
    return df.to_string(index=False, na_rep="-", float_format=lambda v: f"{v:.4g}")


# -------------------------------
# Plot-ready data
# -------------------------------

FIGURE_COLUMNS = ["scheme", "d_th", "d_mean", "d_p99", "d_p99_9", "p_lost", "q_mean"]


def emit_figure_data(rows: Sequence[ReportRow], out_dir: str) -> List[str]:
    """
    Write one CSV per (direction, traffic, environment, rx_policy, seed)
    panel that sweeps d_th: rows sorted by scheme then d_th. Panels with a
    single d_th value are skipped.
    """
    if not rows:
        return []
    df = pd.DataFrame(list(rows))
    keys = ["direction", "traffic", "environment", "rx_policy", "seed"]
    os.makedirs(out_dir, exist_ok=True)

    written: List[str] = []
    for values, panel in df.groupby(keys, sort=True):
        if panel["d_th"].nunique() < 2:
            continue
        direction, traffic, environment, rx_policy, seed = values
        name = f"dth_{direction}_{traffic}_{environment}_{rx_policy}_s{seed}.csv"
        path = os.path.join(out_dir, name)
        panel = panel.sort_values(["scheme", "d_th"], kind="mergesort")
        out = pd.DataFrame(
            [[format_value(c, v) for c, v in zip(FIGURE_COLUMNS, record)]
             for record in panel[FIGURE_COLUMNS].itertuples(index=False, name=None)],
            columns=FIGURE_COLUMNS,
        )
        out.to_csv(path, index=False, lineterminator="\n")
        written.append(path)
        logger.info("[MATRIX] figure data -> %s", path)
    return written
