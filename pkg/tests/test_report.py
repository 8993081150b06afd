# tests/test_report.py

import os

import pytest

from src.report import (
    COLUMNS,
    emit_csv,
    emit_figure_data,
    format_ratio,
    format_value,
    make_report_row,
    parse_csv,
    render_table,
    steady_state_table,
)


@pytest.fixture
def row(make_config, sample_report):
    return make_report_row(make_config("lre.scheme=rda-q", "lre.d_th=2"), sample_report)


@pytest.mark.parametrize(
    "value, text",
    [
        (0.245, "0.245000"),
        (4.21e-5, "0.0000421000"),
        (0.0, "0.000000"),
        (0.5, "0.500000"),
        (1e-7, "0.000000100000"),
        (1.0, "1.000000"),
    ],
)
def test_ratio_has_six_significant_digits(value, text):
    assert format_ratio(value) == text


def test_missing_values_render_empty():
    assert format_value("d_mean", None) == ""
    assert format_value("q_mean_2", float("nan")) == ""
    assert format_value("d_p99", 1500) == "1500"
    assert format_value("dq_mean", 200.1) == "200.100"


def test_row_carries_labels_and_provenance(row):
    assert list(row) == COLUMNS
    assert row["scheme"] == "rda-q"
    assert row["d_th"] == 2
    assert row["schema_version"] == 1
    assert "lre.d_th=2" in row["effective_config"].split(";")
    # quantized like the CSV renders it
    assert row["d_mean"] == 412.346
    assert row["p_d_gt_dmin"] == 0.812346


def test_csv_round_trip(tmp_path, row):
    path = str(tmp_path / "out.csv")
    emit_csv([row], path)
    assert parse_csv(path) == [row]

    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert len(lines) == 2
    assert lines[0] == ",".join(COLUMNS)


def test_reemitting_parsed_rows_is_byte_identical(tmp_path, row):
    first = str(tmp_path / "a.csv")
    second = str(tmp_path / "b.csv")
    emit_csv([row], first)
    emit_csv(parse_csv(first), second)
    with open(first, "rb") as a, open(second, "rb") as b:
        assert a.read() == b.read()


def test_append_keeps_a_single_header(tmp_path, row):
    path = str(tmp_path / "runs.csv")
    emit_csv([row], path, append=True)
    emit_csv([row], path, append=True)
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert len(lines) == 3
    assert len(parse_csv(path)) == 2


def test_append_refuses_foreign_file(tmp_path, row):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(ValueError):
        emit_csv([row], str(path), append=True)


def test_empty_rows_are_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], str(tmp_path / "empty.csv"))


def test_missing_report_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_csv(str(tmp_path / "nope.csv"))


def test_table_units(row):
    table = steady_state_table([row])
    line = table.iloc[0]
    assert line["d_mean"] == pytest.approx(0.412346)
    assert line["d_max"] == pytest.approx(12.0)
    assert line["P>1"] == pytest.approx(41.2)
    assert "rda-q" in render_table([row])
    assert render_table([]) == "(no rows)"


def test_figure_data_one_file_per_sweeping_panel(tmp_path, make_config, sample_report):
    rows = [
        make_report_row(make_config("lre.scheme=rda-q", f"lre.d_th={d}"), sample_report)
        for d in (0, 1, 2)
    ]
    # a lone d_th in another environment is not a sweep
    rows.append(make_report_row(make_config("environment.name=hostile"), sample_report))

    written = emit_figure_data(rows, str(tmp_path / "fig"))
    assert [os.path.basename(p) for p in written] == ["dth_uplink_c1_benign_ordered_s0.csv"]
    with open(written[0], encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0] == "scheme,d_th,d_mean,d_p99,d_p99_9,p_lost,q_mean"
    assert [line.split(",")[1] for line in lines[1:]] == ["0", "1", "2"]
