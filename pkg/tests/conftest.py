# tests/conftest.py

from typing import Callable, List

import pytest

from src.engine import Engine
from src.loader import ScenarioConfig, config_entries, resolve
from src.schema import RunReport


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run long statistical checks",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: List[pytest.Item]) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def engine() -> Engine:
    return Engine(seed=7)


# clean channels: no interferers, no jammer, no warm-up, short drain
QUIET = [
    "environment.interferers_per_channel=0",
    "environment.jammer=false",
    "run.warmup_fraction=0",
    "run.drain_us=20000",
]


@pytest.fixture
def make_config() -> Callable[..., ScenarioConfig]:
    """make_config("lre.scheme=dcf", ..., quiet=True) -> validated ScenarioConfig"""

    def factory(*overrides: str, quiet: bool = False) -> ScenarioConfig:
        base = list(QUIET) if quiet else []
        return resolve(config_entries(None, base + list(overrides)))

    return factory


@pytest.fixture
def sample_report() -> RunReport:
    return {
        "d_mean": 412.3456,
        "d_std": 120.98765,
        "d_min": 38,
        "d_p95": 900,
        "d_p99": 1500,
        "d_p99_5": 2100,
        "d_p99_9": 4000,
        "d_max": 12000,
        "dq_mean": 200.1,
        "dt_mean": 150.2,
        "dr_mean": 62.0456,
        "p_d_gt_dmin": 0.8123456,
        "p_d_gt_1ms": 0.0412,
        "p_d_gt_10ms": 0.000523,
        "p_d_gt_100ms": 0.0,
        "p_lost": 0.0,
        "q_mean_1": 1.23456,
        "q_mean_2": 1.2,
        "q_mean": 1.21728,
        "generated": 1000,
        "delivered": 1000,
        "lost_overrun": 0,
        "lost_retry_limit": 0,
        "lost_reorder_skip": 0,
        "in_flight": 0,
        "duplicates_discarded": 640,
        "late_discarded": 2,
        "aborts": 11,
        "scrubs": 300,
        "deferrals": 0,
        "air_attempts_1": 1100,
        "air_attempts_2": 1050,
        "stray_acks": 0,
    }
