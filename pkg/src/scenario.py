# src/scenario.py

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .channel import GilbertElliott, Medium, stationary_bad_fraction
from .engine import Engine
from .loader import ScenarioConfig, disturbance_params
from .lre import TxPolicy
from .mac import DcfMac
from .metrics import MetricsCollector
from .schema import RunReport
from .stations import (
    Interferer,
    Receiver,
    RedundantSender,
    interferer_id,
    make_sink,
    sink_id,
)
from .traffic import PacketSource, interferer_offered_load

logger = logging.getLogger(__name__)

# virtual time advanced per engine call while the source is active
RUN_CHUNK_US = 1_000_000


@dataclass
class Simulation:
    """One assembled testbed, ready to run once."""

    config: ScenarioConfig
    engine: Engine
    media: Dict[int, Medium]
    sender: RedundantSender
    receiver: Receiver
    source: PacketSource
    metrics: MetricsCollector
    warmup_us: int
    interferers: List[Interferer] = field(default_factory=list)
    sinks: Dict[int, DcfMac] = field(default_factory=dict)
    finished: bool = False


def nominal_span_us(config: ScenarioConfig) -> int:
    """Expected generation span, used to size the warm-up window."""
    spans = []
    if config.run.packets is not None:
        spans.append(int(config.run.packets * config.traffic.mean_period_us))
    if config.run.duration_us is not None:
        spans.append(config.run.duration_us)
    return min(spans) if spans else 0


def tx_policy(config: ScenarioConfig) -> TxPolicy:
    scheme = config.lre.scheme
    return TxPolicy(
        mode="basic" if scheme in ("dcf", "basic") else scheme,
        d_th=config.lre.d_th,
        capacity=config.lre.capacity,
        deferral_flags=config.lre.ddd_flags,
    )


def _make_medium(engine: Engine, config: ScenarioConfig, channel: int) -> Medium:
    env = config.environment
    disturbance: Optional[GilbertElliott] = None
    if env.jammer:
        disturbance = GilbertElliott(
            **disturbance_params(config),
            rng=engine.stream(f"jammer/{channel}"),
            bit_rng=engine.stream(f"jammer/{channel}/bits"),
        )
    return Medium(channel, engine, disturbance, bits_per_us=env.bit_rate_mbps)


def build(config: ScenarioConfig) -> Simulation:
    """
    Assemble the testbed for `config`.

    Steps:
    1. One medium per channel, each with its own jammer process.
    2. S (sender) and D (receiver) with one sub-station per channel.
       Uplink: S is an RSTA, D the RAP reordering per rx_policy.
       Downlink: S is the RAP, D stands for `downlink_fanout` RSTAs.
    3. Interferers and their ACK sink on every channel.
    4. The application source feeding S.
    """
    if config.run.packets is None and config.run.duration_us is None:
        raise ValueError("run needs a packet count or a duration")
    engine = Engine(seed=config.run.seed)
    timings = config.timings()
    params = config.mac_params()
    channels = config.channels

    media = {k: _make_medium(engine, config, k) for k in channels}

    warmup_us = int(config.run.warmup_fraction * nominal_span_us(config))
    metrics = MetricsCollector(channels, warmup_us=warmup_us, d_min_us=config.mac.data_airtime_us)

    downlink = config.run.direction == "downlink"
    sender = RedundantSender(
        engine, media, timings, params, tx_policy(config), metrics,
        payload_bytes=config.traffic.payload_bytes,
        fanout=config.lre.downlink_fanout if downlink else 1,
    )
    receiver = Receiver(
        engine, media, timings, params,
        rx_policy="unordered" if downlink else config.lre.rx_policy,
        reorder_timeout_us=config.lre.reorder_timeout_us,
        metrics=metrics,
    )

    interferers: List[Interferer] = []
    sinks: Dict[int, DcfMac] = {}
    profile = config.traffic.interferer_profile()
    for k in channels:
        if config.environment.interferers_per_channel == 0:
            continue
        sinks[k] = make_sink(k, engine, media[k], timings, params)
        for i in range(config.environment.interferers_per_channel):
            interferers.append(
                Interferer(interferer_id(k, i), engine, media[k], timings, params, profile, sink_id(k))
            )

    source = PacketSource(
        engine,
        config.traffic.source_profile(),
        sender.send,
        count=config.run.packets,
        until_us=config.run.duration_us,
        on_finish=metrics.queues.stop,
    )

    return Simulation(
        config=config,
        engine=engine,
        media=media,
        sender=sender,
        receiver=receiver,
        source=source,
        metrics=metrics,
        warmup_us=warmup_us,
        interferers=interferers,
        sinks=sinks,
    )


def collect_counters(sim: Simulation) -> Dict[str, int]:
    macs = sim.sender.macs
    lre = sim.sender.lre
    return {
        "duplicates_discarded": sim.receiver.lre.duplicates,
        "late_discarded": sim.receiver.lre.late,
        "aborts": sum(mac.aborts for mac in macs.values()),
        "scrubs": lre.scrubs,
        "deferrals": lre.deferrals,
        "air_attempts_1": macs[1].air_attempts if 1 in macs else 0,
        "air_attempts_2": macs[2].air_attempts if 2 in macs else 0,
        "stray_acks": sum(mac.stray_acks for mac in macs.values()),
    }


def run(sim: Simulation) -> RunReport:
    """
    Run the testbed: generate until the source stops, then let queued
    frames drain for `run.drain_us` and finalize the report.
    Packets still unresolved after the drain are reported as in flight.
    """
    if sim.finished:
        raise RuntimeError("a Simulation can only be run once")
    sim.finished = True

    config = sim.config
    engine = sim.engine
    started = time.perf_counter()
    logger.info(
        "[RUN] %s %s %s %s d_th=%d seed=%d",
        config.run.direction, config.traffic.profile, config.environment.name,
        config.lre.scheme, config.lre.d_th, config.run.seed,
    )

    for interferer in sim.interferers:
        interferer.start()
    sim.source.start()

    while not sim.source.done:
        engine.run_until(engine.now + RUN_CHUNK_US)

    t_gen_end = sim.source.finished_at if sim.source.finished_at is not None else engine.now
    engine.run_until(max(engine.now, t_gen_end + config.run.drain_us))

    report = sim.metrics.report(t_gen_end, collect_counters(sim))
    logger.info(
        "[RUN] done: generated=%d delivered=%d lost=%d in_flight=%d events=%d (%.1fs)",
        report["generated"], report["delivered"],
        report["lost_overrun"] + report["lost_retry_limit"] + report["lost_reorder_skip"],
        report["in_flight"], engine.processed, time.perf_counter() - started,
    )
    return report


def run_scenario(config: ScenarioConfig) -> RunReport:
    return run(build(config))


# -------------------------------
# Calibration
# -------------------------------


def calibrate_interferer(config: ScenarioConfig, duration_us: int) -> Dict[str, float]:
    """
    Measure the offered load of one interferer alone on a clean channel:
    the share of time taken by the exchanges (data + SIFS + ACK + DIFS) of
    its first attempts that succeeded.
    """
    engine = Engine(seed=config.run.seed)
    timings = config.timings()
    params = config.mac_params()
    medium = Medium(1, engine, None, bits_per_us=config.environment.bit_rate_mbps)
    make_sink(1, engine, medium, timings, params)
    profile = config.traffic.interferer_profile()
    node = Interferer(interferer_id(1, 0), engine, medium, timings, params, profile, sink_id(1))

    node.start()
    engine.run_until(duration_us)

    exchange = (
        timings.data_airtime(profile.payload_bytes)
        + timings.sifs_us + timings.ack_airtime_us + timings.difs_us
    )
    measured = node.mac.first_attempt_successes * exchange / duration_us if duration_us > 0 else 0.0
    result = {
        "duration_us": float(duration_us),
        "expected_load": interferer_offered_load(profile, timings),
        "measured_load": measured,
        "air_share": medium.air_share(node.node_id, duration_us),
        "bursts": float(node.traffic.bursts),
        "frames": float(node.offered),
        "overflows": float(node.overflows),
    }
    logger.info(
        "[CAL] interferer load measured=%.4f expected=%.4f over %d bursts",
        result["measured_load"], result["expected_load"], node.traffic.bursts,
    )
    return result


def calibrate_disturbance(config: ScenarioConfig, steps: int) -> Dict[str, float]:
    """Bad-state occupancy of the jammer process over `steps` steps."""
    params = disturbance_params(config)
    rng = np.random.default_rng(np.random.SeedSequence([config.run.seed, 0x6A]))
    jammer = GilbertElliott(**params, rng=rng, bit_rng=rng)
    occupancy = jammer.bad_occupancy(steps, rng)
    result = {
        "steps": float(steps),
        "bad_occupancy": occupancy,
        "expected_bad_fraction": stationary_bad_fraction(params["p_gb"], params["p_bg"]),
    }
    logger.info(
        "[CAL] %s jammer bad occupancy=%.5f expected=%.5f",
        config.environment.name, occupancy, result["expected_bad_fraction"],
    )
    return result
