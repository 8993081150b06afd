# src/loader.py

import configparser
import logging
import os
import re
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, get_args

from .mac import MacTimings
from .schema import Direction, EnvironmentName, PostBackoff, RxPolicy, Scheme, TrafficLaw
from .stations import MacParams
from .traffic import SOURCE_PROFILES, InterfererProfile, SourceProfile

logger = logging.getLogger(__name__)

CLI_SOURCE = "<command line>"
DEFAULT_SOURCE = "<defaults>"


# -------------------------------
# Errors
# -------------------------------


@dataclass(frozen=True)
class Diagnostic:
    path: str
    line: int
    message: str

    def __str__(self) -> str:
        if self.line > 0:
            return f"{self.path}:{self.line}: {self.message}"
        return f"{self.path}: {self.message}"


class ConfigError(ValueError):
    """Invalid scenario configuration; carries one Diagnostic per problem."""

    def __init__(self, diagnostics: Sequence[Diagnostic]) -> None:
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# -------------------------------
# Configuration sections
# -------------------------------


@dataclass
class EnvironmentConfig:
    """Interference and disturbance of one environment (benign or hostile)."""

    name: EnvironmentName = "benign"
    interferers_per_channel: int = 2
    jammer: bool = True
    p_gb: float = 1.74e-4
    p_bg: float = 1.74e-2
    p_g: float = 0.0
    p_b: float = 7.5e-2
    step_us: int = 1
    bit_rate_mbps: float = 54.0


@dataclass
class TrafficConfig:
    profile: str = "c1"
    law: TrafficLaw = "cyclic"
    mean_period_us: float = 1000.0
    payload_bytes: int = 50
    interferer_frames_per_burst: int = 700
    interferer_payload_bytes: int = 1500
    interferer_period_us: int = 500
    interferer_gap_mean_us: float = 1_000_000.0
    interferer_buffer: int = 1000

    def source_profile(self) -> SourceProfile:
        return SourceProfile(self.law, self.mean_period_us, self.payload_bytes)

    def interferer_profile(self) -> InterfererProfile:
        return InterfererProfile(
            frames_per_burst=self.interferer_frames_per_burst,
            payload_bytes=self.interferer_payload_bytes,
            period_us=self.interferer_period_us,
            gap_mean_us=self.interferer_gap_mean_us,
            buffer_capacity=self.interferer_buffer,
        )


@dataclass
class MacConfig:
    slot_us: int = 20
    sifs_us: int = 10
    difs_us: int = 50
    ack_airtime_us: int = 34
    ack_timeout_us: int = 64
    data_airtime_us: int = 38
    interferer_airtime_us: int = 254
    cw_min: int = 31
    cw_max: int = 1023
    retry_limit: int = 7
    post_backoff: PostBackoff = "backlogged"


@dataclass
class LreConfig:
    scheme: Scheme = "rda-r"
    d_th: int = 0
    rx_policy: RxPolicy = "ordered"
    capacity: int = 2000
    reorder_timeout_us: int = 10_000
    ddd_flags: bool = True
    downlink_fanout: int = 16


@dataclass
class RunConfig:
    direction: Direction = "uplink"
    seed: int = 0
    # None: resolved from the traffic profile (1e6 packets, 2e6 for e05)
    packets: Optional[int] = None
    duration_us: Optional[int] = None
    warmup_fraction: float = 0.05
    drain_us: int = 1_000_000


@dataclass
class ScenarioConfig:
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    mac: MacConfig = field(default_factory=MacConfig)
    lre: LreConfig = field(default_factory=LreConfig)
    run: RunConfig = field(default_factory=RunConfig)

    # "section.key" -> (source, line) of the entry that last set it
    origins: Dict[str, Tuple[str, int]] = field(default_factory=dict, compare=False, repr=False)

    @property
    def channels(self) -> List[int]:
        return [1] if self.lre.scheme == "dcf" else [1, 2]

    def timings(self) -> MacTimings:
        m = self.mac
        return MacTimings(
            slot_us=m.slot_us,
            sifs_us=m.sifs_us,
            difs_us=m.difs_us,
            ack_airtime_us=m.ack_airtime_us,
            ack_timeout_us=m.ack_timeout_us,
            airtimes={
                self.traffic.payload_bytes: m.data_airtime_us,
                self.traffic.interferer_payload_bytes: m.interferer_airtime_us,
            },
        )

    def mac_params(self) -> MacParams:
        return MacParams(
            self.mac.cw_min, self.mac.cw_max, self.mac.retry_limit, self.mac.post_backoff
        )


SECTIONS: Dict[str, type] = {
    "environment": EnvironmentConfig,
    "traffic": TrafficConfig,
    "mac": MacConfig,
    "lre": LreConfig,
    "run": RunConfig,
}


# -------------------------------
# Presets
# -------------------------------

ENVIRONMENT_PRESETS: Dict[str, Dict[str, Any]] = {
    "benign": {"interferers_per_channel": 2, "p_gb": 1.74e-4, "p_bg": 1.74e-2, "p_g": 0.0, "p_b": 7.5e-2},
    "hostile": {"interferers_per_channel": 4, "p_gb": 1.74e-4, "p_bg": 1.74e-3, "p_g": 0.0, "p_b": 7.5e-2},
}

DEFAULT_PACKETS: Dict[str, int] = {"c1": 1_000_000, "e1": 1_000_000, "e05": 2_000_000}


# -------------------------------
# Value parsing
# -------------------------------


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {text!r}") from None
        return int(value)


def _parse_optional_int(text: str) -> Optional[int]:
    if text.strip().lower() in ("", "none", "auto"):
        return None
    return _parse_int(text)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(options: Iterable[str]) -> Callable[[str], str]:
    allowed = tuple(options)

    def parse(text: str) -> str:
        value = text.strip().lower()
        if value not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}, got {text!r}")
        return value

    return parse


_PARSERS: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "environment": {
        "name": _choice(get_args(EnvironmentName)),
        "interferers_per_channel": _parse_int,
        "jammer": _parse_bool,
        "p_gb": float,
        "p_bg": float,
        "p_g": float,
        "p_b": float,
        "step_us": _parse_int,
        "bit_rate_mbps": float,
    },
    "traffic": {
        "profile": _choice(SOURCE_PROFILES),
        "law": _choice(get_args(TrafficLaw)),
        "mean_period_us": float,
        "payload_bytes": _parse_int,
        "interferer_frames_per_burst": _parse_int,
        "interferer_payload_bytes": _parse_int,
        "interferer_period_us": _parse_int,
        "interferer_gap_mean_us": float,
        "interferer_buffer": _parse_int,
    },
    "mac": {
        **{f.name: _parse_int for f in fields(MacConfig) if f.name != "post_backoff"},
        "post_backoff": _choice(get_args(PostBackoff)),
    },
    "lre": {
        "scheme": _choice(get_args(Scheme)),
        "d_th": _parse_int,
        "rx_policy": _choice(get_args(RxPolicy)),
        "capacity": _parse_int,
        "reorder_timeout_us": _parse_int,
        "ddd_flags": _parse_bool,
        "downlink_fanout": _parse_int,
    },
    "run": {
        "direction": _choice(get_args(Direction)),
        "seed": _parse_int,
        "packets": _parse_optional_int,
        "duration_us": _parse_optional_int,
        "warmup_fraction": float,
        "drain_us": _parse_int,
    },
}


# -------------------------------
# Entries: raw "section.key = value" settings with their origin
# -------------------------------


@dataclass(frozen=True)
class Entry:
    section: str
    key: str
    value: str
    source: str = CLI_SOURCE
    line: int = 0

    @property
    def dotted(self) -> str:
        return f"{self.section}.{self.key}"


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def get_config_path(name: str) -> str:
    """
    Resolve a scenario file name. Existing paths are used as given;
    bare names are looked up under configs/.

    Example:
        "benign_uplink.cfg" --> configs/benign_uplink.cfg
    """
    if os.path.exists(name) or os.path.isabs(name):
        return name
    current_dir = os.path.dirname(os.path.abspath(__file__))
    project_root = os.path.abspath(os.path.join(current_dir, ".."))
    return os.path.join(project_root, "configs", name)


def _line_index(text: str) -> Dict[Tuple[str, str], int]:
    """Map (section, key) to the 1-based line where the key is written."""
    index: Dict[Tuple[str, str], int] = {}
    section = ""
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        header = _SECTION_RE.match(raw)
        if header:
            section = header.group(1).strip().lower()
            index[(section, "")] = number
            continue
        key = _KEY_RE.match(raw)
        if key:
            index[(section, key.group(1).strip().lower())] = number
    return index


def read_config_file(path: str) -> List[Entry]:
    """
    Read an INI scenario file into Entries, in file order.

    Raises FileNotFoundError if the file is missing and ConfigError for
    syntax errors and unknown sections or keys.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config not found at: {path}")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()

    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", 0) or 0
        raise ConfigError([Diagnostic(path, line, str(exc).splitlines()[0])]) from None

    lines = _line_index(text)
    entries: List[Entry] = []
    problems: List[Diagnostic] = []
    for section in parser.sections():
        if section not in SECTIONS:
            problems.append(
                Diagnostic(path, lines.get((section, ""), 0), f"unknown section [{section}]")
            )
            continue
        for key, value in parser.items(section):
            line = lines.get((section, key), 0)
            if key not in _PARSERS[section]:
                problems.append(Diagnostic(path, line, f"unknown key '{key}' in [{section}]"))
                continue
            entries.append(Entry(section, key, value, path, line))
    if problems:
        raise ConfigError(problems)
    return entries


def parse_override(text: str, position: int = 0) -> Entry:
    """Turn a "section.key=value" command-line override into an Entry."""
    dotted, sep, value = text.partition("=")
    section, dot, key = dotted.strip().lower().partition(".")
    if not sep or not dot or not key:
        raise ConfigError(
            [Diagnostic(CLI_SOURCE, position, f"override must look like section.key=value, got {text!r}")]
        )
    if section not in SECTIONS or key not in _PARSERS[section]:
        raise ConfigError([Diagnostic(CLI_SOURCE, position, f"unknown key '{section}.{key}'")])
    return Entry(section, key, value.strip(), CLI_SOURCE, position)


# -------------------------------
# Resolution and validation
# -------------------------------


def resolve(entries: Sequence[Entry]) -> ScenarioConfig:
    """
    Build a validated ScenarioConfig from entries.

    Steps:
    1. Start from defaults.
    2. Apply the last `environment.name` and `traffic.profile` presets.
    3. Apply every other entry in order (later entries win).
    4. Fill derived defaults and validate.
    """
    config = ScenarioConfig()
    problems: List[Diagnostic] = []

    def apply(entry: Entry) -> None:
        parser = _PARSERS[entry.section][entry.key]
        try:
            value = parser(entry.value)
        except ValueError as exc:
            problems.append(Diagnostic(entry.source, entry.line, f"{entry.dotted}: {exc}"))
            return
        setattr(getattr(config, entry.section), entry.key, value)
        config.origins[entry.dotted] = (entry.source, entry.line)

    presets = {"environment.name": None, "traffic.profile": None}
    for entry in entries:
        if entry.dotted in presets:
            presets[entry.dotted] = entry

    env_entry = presets["environment.name"]
    if env_entry is not None:
        apply(env_entry)
        preset = ENVIRONMENT_PRESETS.get(config.environment.name, {})
        for key, value in preset.items():
            setattr(config.environment, key, value)

    traffic_entry = presets["traffic.profile"]
    if traffic_entry is not None:
        apply(traffic_entry)
        profile = SOURCE_PROFILES.get(config.traffic.profile)
        if profile is not None:
            config.traffic.law = profile.law
            config.traffic.mean_period_us = profile.mean_period_us
            config.traffic.payload_bytes = profile.payload_bytes

    for entry in entries:
        if entry.dotted not in presets:
            apply(entry)

    if problems:
        raise ConfigError(problems)

    if config.run.packets is None and config.run.duration_us is None:
        config.run.packets = DEFAULT_PACKETS.get(config.traffic.profile, 1_000_000)

    if config.run.direction == "downlink" and config.lre.rx_policy != "unordered":
        if "lre.rx_policy" in config.origins:
            logger.warning("[CONFIG] downlink disables reordering; rx_policy forced to unordered")
        config.lre.rx_policy = "unordered"

    problems = validate(config)
    if problems:
        raise ConfigError(problems)
    return config


def validate(config: ScenarioConfig) -> List[Diagnostic]:
    """Return one Diagnostic per violated constraint (empty when valid)."""
    problems: List[Diagnostic] = []

    def fail(dotted: str, message: str) -> None:
        source, line = config.origins.get(dotted, (DEFAULT_SOURCE, 0))
        problems.append(Diagnostic(source, line, f"{dotted}: {message}"))

    env, traffic, mac, lre, run = (
        config.environment, config.traffic, config.mac, config.lre, config.run,
    )

    for name in ("p_gb", "p_bg", "p_g", "p_b"):
        value = getattr(env, name)
        if not 0.0 <= value <= 1.0:
            fail(f"environment.{name}", f"probability must lie in [0, 1], got {value}")
    if env.interferers_per_channel < 0:
        fail("environment.interferers_per_channel", "must be >= 0")
    if env.step_us <= 0:
        fail("environment.step_us", "must be positive")
    if env.bit_rate_mbps <= 0:
        fail("environment.bit_rate_mbps", "must be positive")

    if traffic.mean_period_us <= 0:
        fail("traffic.mean_period_us", "must be positive")
    if traffic.payload_bytes == traffic.interferer_payload_bytes and mac.data_airtime_us != mac.interferer_airtime_us:
        fail("traffic.payload_bytes", "equal payload sizes need equal airtimes")
    for name in ("interferer_frames_per_burst", "interferer_period_us", "interferer_buffer"):
        if getattr(traffic, name) <= 0:
            fail(f"traffic.{name}", "must be positive")
    if traffic.interferer_gap_mean_us < 0:
        fail("traffic.interferer_gap_mean_us", "must be >= 0")

    for name in ("slot_us", "sifs_us", "ack_airtime_us", "data_airtime_us", "interferer_airtime_us"):
        if getattr(mac, name) <= 0:
            fail(f"mac.{name}", "must be positive")
    if mac.difs_us != mac.sifs_us + 2 * mac.slot_us:
        fail("mac.difs_us", f"DIFS must equal SIFS + 2 * slot ({mac.sifs_us + 2 * mac.slot_us} us)")
    if mac.ack_timeout_us < mac.sifs_us + mac.ack_airtime_us:
        fail("mac.ack_timeout_us", "must cover SIFS + ACK airtime")
    if mac.cw_min < 1 or mac.cw_max < mac.cw_min:
        fail("mac.cw_max", "need 1 <= cw_min <= cw_max")
    if mac.retry_limit < 1:
        fail("mac.retry_limit", "must be >= 1")

    if not 0 <= lre.d_th <= mac.retry_limit:
        fail("lre.d_th", f"must lie in [0, {mac.retry_limit}]")
    elif lre.scheme == "dcf" and lre.d_th > 0:
        fail("lre.d_th", "simplex DCF has no duplicates to defer (d_th must be 0)")
    elif lre.scheme == "basic" and lre.d_th > 0:
        fail("lre.d_th", "basic Wi-Red has no queue scrubbing; deferral needs rda-q or rda-r")
    if lre.capacity < 1:
        fail("lre.capacity", "must be >= 1")
    if lre.reorder_timeout_us < 0:
        fail("lre.reorder_timeout_us", "must be >= 0")
    if lre.downlink_fanout < 1:
        fail("lre.downlink_fanout", "must be >= 1")

    if run.packets is not None and run.packets < 0:
        fail("run.packets", "must be >= 0")
    if run.duration_us is not None and run.duration_us < 0:
        fail("run.duration_us", "must be >= 0")
    if not 0.0 <= run.warmup_fraction < 1.0:
        fail("run.warmup_fraction", "must lie in [0, 1)")
    if run.drain_us < 0:
        fail("run.drain_us", "must be >= 0")
    if run.seed < 0:
        fail("run.seed", "must be >= 0")

    return problems


def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> ScenarioConfig:
    """Read an optional scenario file, apply `section.key=value` overrides, validate."""
    entries = config_entries(path, overrides)
    return resolve(entries)


def config_entries(path: Optional[str] = None, overrides: Sequence[str] = ()) -> List[Entry]:
    entries: List[Entry] = []
    if path is not None:
        entries.extend(read_config_file(get_config_path(path)))
    for position, text in enumerate(overrides, start=1):
        entries.append(parse_override(text, position))
    return entries


# -------------------------------
# Provenance
# -------------------------------


def effective_config(config: ScenarioConfig) -> str:
    """Canonical `section.key=value;...` rendering, in declaration order."""
    parts: List[str] = []
    for section in SECTIONS:
        block = getattr(config, section)
        for f in fields(block):
            value = getattr(block, f.name)
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif value is None:
                text = "none"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            parts.append(f"{section}.{f.name}={text}")
    return ";".join(parts)


def disturbance_params(config: ScenarioConfig) -> Dict[str, float]:
    """Keyword arguments of GilbertElliott for this environment."""
    env = config.environment
    return {
        "p_gb": env.p_gb,
        "p_bg": env.p_bg,
        "p_g": env.p_g,
        "p_b": env.p_b,
        "step_us": env.step_us,
        "bits_per_step": env.bit_rate_mbps * env.step_us,
    }

