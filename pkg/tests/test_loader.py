# tests/test_loader.py

import os

import pytest

from src.loader import (
    ConfigError,
    Diagnostic,
    config_entries,
    effective_config,
    get_config_path,
    load_config,
    parse_override,
    read_config_file,
    resolve,
)


def _write(tmp_path, text, name="scenario.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_defaults_are_valid_and_sized_by_profile():
    config = resolve([])
    assert config.lre.scheme == "rda-r"
    assert config.run.packets == 1_000_000
    assert config.channels == [1, 2]


def test_fast_profile_gets_longer_default_run():
    config = resolve(config_entries(None, ["traffic.profile=e05"]))
    assert config.traffic.law == "exponential"
    assert config.traffic.mean_period_us == 500.0
    assert config.run.packets == 2_000_000


def test_environment_switch_changes_only_interferers_and_recovery():
    benign = effective_config(resolve(config_entries(None, ["environment.name=benign"]))).split(";")
    hostile = effective_config(resolve(config_entries(None, ["environment.name=hostile"]))).split(";")
    changed = {a.split("=")[0] for a, b in zip(benign, hostile) if a != b}
    assert changed == {
        "environment.name",
        "environment.interferers_per_channel",
        "environment.p_bg",
    }


def test_explicit_key_beats_preset_whatever_the_order():
    config = resolve(config_entries(None, ["environment.p_bg=0.5", "environment.name=hostile"]))
    assert config.environment.p_bg == 0.5
    assert config.environment.interferers_per_channel == 4


def test_file_and_overrides(tmp_path):
    path = _write(tmp_path, "[lre]\nscheme = rda-q\nd_th = 2\n\n[run]\nseed = 9\n")
    config = load_config(path, ["lre.d_th=3"])
    assert config.lre.scheme == "rda-q"
    assert config.lre.d_th == 3
    assert config.run.seed == 9


def test_unknown_key_is_anchored_to_its_line(tmp_path):
    path = _write(tmp_path, "[lre]\nscheme = rda-q\nbogus = 1\n")
    with pytest.raises(ConfigError) as info:
        read_config_file(path)
    assert info.value.diagnostics == [Diagnostic(path, 3, "unknown key 'bogus' in [lre]")]
    assert f"{path}:3: unknown key" in str(info.value)


def test_unknown_section_is_reported(tmp_path):
    path = _write(tmp_path, "# comment\n[phy]\nrate = 54\n")
    with pytest.raises(ConfigError) as info:
        read_config_file(path)
    assert info.value.diagnostics[0].line == 2


def test_bad_value_points_at_its_line(tmp_path):
    path = _write(tmp_path, "[run]\nseed = 1\npackets = lots\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.diagnostics[0].path == path
    assert info.value.diagnostics[0].line == 3


def test_syntax_error_is_a_config_error(tmp_path):
    path = _write(tmp_path, "scheme = rda-q\n")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        read_config_file("/nonexistent/scenario.cfg")


@pytest.mark.parametrize(
    "overrides",
    [
        ["lre.scheme=dcf", "lre.d_th=1"],
        ["lre.scheme=basic", "lre.d_th=2"],
        ["lre.d_th=8"],
        ["lre.d_th=-1"],
        ["mac.difs_us=40"],
        ["environment.p_b=1.5"],
        ["run.warmup_fraction=1"],
        ["lre.scheme=tdma"],
        ["mac.post_backoff=never"],
    ],
)
def test_invalid_combinations_are_rejected(overrides):
    with pytest.raises(ConfigError):
        resolve(config_entries(None, overrides))


def test_threshold_may_reach_the_retry_limit():
    config = resolve(config_entries(None, ["lre.scheme=rda-q", "lre.d_th=7"]))
    assert config.lre.d_th == 7


def test_override_syntax():
    entry = parse_override("LRE.d_th = 3", position=2)
    assert (entry.section, entry.key, entry.value, entry.line) == ("lre", "d_th", "3", 2)
    with pytest.raises(ConfigError):
        parse_override("d_th=3")
    with pytest.raises(ConfigError):
        parse_override("lre.nothing=3")
    with pytest.raises(ConfigError):
        parse_override("lre.d_th")


def test_validation_error_names_the_override_position():
    with pytest.raises(ConfigError) as info:
        resolve(config_entries(None, ["run.seed=1", "lre.d_th=9"]))
    assert info.value.diagnostics[0].line == 2


def test_downlink_disables_reordering():
    config = resolve(config_entries(None, ["run.direction=downlink", "lre.rx_policy=ordered"]))
    assert config.lre.rx_policy == "unordered"


def test_integer_keys_accept_scientific_notation():
    config = resolve(config_entries(None, ["run.packets=1e4"]))
    assert config.run.packets == 10_000


def test_effective_config_is_canonical():
    a = resolve(config_entries(None, ["lre.scheme=rda-q", "run.seed=3"]))
    b = resolve(config_entries(None, ["run.seed=3", "lre.scheme=rda-q"]))
    assert effective_config(a) == effective_config(b)
    assert "lre.scheme=rda-q" in effective_config(a).split(";")
    assert "environment.jammer=true" in effective_config(a).split(";")


def test_bundled_configs_load():
    path = get_config_path("benign_uplink.cfg")
    assert path.endswith(os.path.join("configs", "benign_uplink.cfg"))
    uplink = load_config("benign_uplink.cfg")
    assert uplink.environment.name == "benign"
    downlink = load_config("hostile_downlink.cfg")
    assert downlink.run.direction == "downlink"
    assert downlink.traffic.profile == "e05"
    assert downlink.lre.d_th == 3


def test_post_backoff_mode_reaches_the_mac_parameters():
    default = resolve([])
    assert default.mac.post_backoff == "backlogged"
    assert default.mac_params().post_backoff == "backlogged"
    config = resolve(config_entries(None, ["mac.post_backoff=Always"]))
    assert config.mac_params().post_backoff == "always"
    assert "mac.post_backoff=always" in effective_config(config).split(";")
