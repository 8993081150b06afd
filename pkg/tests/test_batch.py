# tests/test_batch.py

import pandas as pd
import pytest

from src.batch import expand, export_excel, parse_axis, run_matrix
from src.loader import ConfigError, config_entries

QUIET = [
    "environment.interferers_per_channel=0",
    "environment.jammer=false",
    "run.warmup_fraction=0",
    "run.drain_us=20000",
    "run.packets=20",
]


def test_range_axis():
    assert parse_axis("d_th=0..3") == ("lre.d_th", ["0", "1", "2", "3"])


def test_list_axis_and_full_key():
    assert parse_axis("scheme=rda-q, rda-r") == ("lre.scheme", ["rda-q", "rda-r"])
    assert parse_axis("mac.cw_min=15,31") == ("mac.cw_min", ["15", "31"])


@pytest.mark.parametrize("text", ["bogus=1,2", "d_th", "d_th=3..1", "d_th=a..b", "lre.nothing=1"])
def test_bad_axes(text):
    with pytest.raises(ConfigError):
        parse_axis(text)


def test_first_axis_varies_slowest():
    configs = expand(
        config_entries(None, []),
        [parse_axis("scheme=rda-q,rda-r"), parse_axis("d_th=0..7")],
    )
    assert len(configs) == 16
    assert [(c.lre.scheme, c.lre.d_th) for c in configs[:2]] == [("rda-q", 0), ("rda-q", 1)]
    assert (configs[8].lre.scheme, configs[8].lre.d_th) == ("rda-r", 0)
    assert configs[-1].lre.d_th == 7


def test_invalid_combination_is_named():
    with pytest.raises(ConfigError) as info:
        expand(config_entries(None, []), [parse_axis("scheme=dcf,rda-q"), parse_axis("d_th=0..1")])
    messages = [d.message for d in info.value.diagnostics]
    assert len(messages) == 1
    assert "[lre.scheme=dcf, lre.d_th=1]" in messages[0]


def test_workers_do_not_change_results():
    configs = expand(config_entries(None, QUIET), [parse_axis("scheme=dcf,rda-r"), parse_axis("seed=1,2")])
    sequential = run_matrix(configs, workers=1)
    parallel = run_matrix(configs, workers=2)
    assert parallel == sequential
    assert [row["scheme"] for row in sequential] == ["dcf", "dcf", "rda-r", "rda-r"]
    assert all(row["delivered"] == 20 for row in sequential)


def test_excel_export(tmp_path):
    configs = expand(config_entries(None, QUIET), [parse_axis("seed=1,2")])
    rows = run_matrix(configs)
    path = export_excel(rows, str(tmp_path / "matrix.xlsx"))

    sheets = pd.read_excel(path, sheet_name=None)
    assert set(sheets) == {"rows", "configs"}
    assert len(sheets["rows"]) == 2
    assert "effective_config" not in sheets["rows"].columns
    assert [str(v) for v in sheets["configs"]["run.seed"]] == ["1", "2"]
