# src/traffic.py

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from .engine import Engine
from .mac import MacTimings
from .schema import TrafficLaw

logger = logging.getLogger(__name__)


# -------------------------------
# Profiles
# -------------------------------


@dataclass(frozen=True)
class SourceProfile:
    """S->D packet generation law; `mean_period_us` is 1/lambda."""

    law: TrafficLaw
    mean_period_us: float
    payload_bytes: int = 50


@dataclass(frozen=True)
class InterfererProfile:
    """Bursty acknowledged bulk traffic of one interfering station."""

    frames_per_burst: int = 700
    payload_bytes: int = 1500
    period_us: int = 500
    gap_mean_us: float = 1_000_000.0
    buffer_capacity: int = 1000


# c(1), e(1), e(0.5)
SOURCE_PROFILES: Dict[str, SourceProfile] = {
    "c1": SourceProfile("cyclic", 1000.0),
    "e1": SourceProfile("exponential", 1000.0),
    "e05": SourceProfile("exponential", 500.0),
}


def next_arrival(profile: SourceProfile, rng: np.random.Generator) -> float:
    """
    Inter-arrival time in microseconds: constant for cyclic sources,
    -T * ln(U) with U uniform on (0, 1] for exponential ones.
    """
    if profile.law == "cyclic":
        return float(profile.mean_period_us)
    u = 1.0 - rng.random()
    return float(-profile.mean_period_us * np.log(u))


def interferer_offered_load(profile: InterfererProfile, timings: MacTimings) -> float:
    """
    Share of channel time one interferer occupies without retransmissions:
    n * (T_TX + SIFS + T_ACK + DIFS) / (n * period + mean gap).
    """
    exchange = (
        timings.data_airtime(profile.payload_bytes)
        + timings.sifs_us
        + timings.ack_airtime_us
        + timings.difs_us
    )
    cycle = profile.frames_per_burst * profile.period_us + profile.gap_mean_us
    return profile.frames_per_burst * exchange / cycle


# -------------------------------
# Generators
# -------------------------------


class PacketSource:
    """
    Application source on S. Calls `emit(now)` once per generated packet,
    until `count` packets were produced or virtual time reaches `until_us`;
    then `on_finish(t)` is called once with the stop instant.

    Arrival instants are accumulated in floating point and rounded to the
    microsecond grid, so rounding never drifts the mean rate.
    """

    def __init__(
        self,
        engine: Engine,
        profile: SourceProfile,
        emit: Callable[[int], None],
        count: Optional[int] = None,
        until_us: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
        on_finish: Optional[Callable[[int], None]] = None,
    ) -> None:
        self.engine = engine
        self.profile = profile
        self.emit = emit
        self.on_finish = on_finish
        self.count = count
        self.until_us = until_us
        self.rng = rng if rng is not None else engine.stream("source")
        self.generated = 0
        self.done = False
        # instant generation stopped: last arrival, or until_us
        self.finished_at: Optional[int] = None
        self._clock = float(engine.now)

    def start(self) -> None:
        self._schedule_next()

    def _schedule_next(self) -> None:
        if self.count is not None and self.generated >= self.count:
            self._finish(self.engine.now)
            return
        self._clock += next_arrival(self.profile, self.rng)
        fire_time = max(int(round(self._clock)), self.engine.now)
        if self.until_us is not None and fire_time >= self.until_us:
            self._finish(max(self.until_us, self.engine.now))
            return
        self.engine.schedule(fire_time, "arrival", self._arrive)

    def _finish(self, at: int) -> None:
        self.done = True
        self.finished_at = at
        if self.on_finish is not None:
            self.on_finish(at)

    def _arrive(self) -> None:
        self.generated += 1
        self.emit(self.engine.now)
        self._schedule_next()


class InterfererTraffic:
    """
    Open-loop burst generator of one interferer: `frames_per_burst` frames,
    one every `period_us`, then an exponential gap. The first burst starts
    after a gap draw too, which spreads interferers' phases at t=0.
    """

    def __init__(
        self,
        engine: Engine,
        profile: InterfererProfile,
        offer: Callable[[], None],
        rng: np.random.Generator,
    ) -> None:
        self.engine = engine
        self.profile = profile
        self.offer = offer
        self.rng = rng
        self.bursts = 0
        self.frames_offered = 0
        self._in_burst = 0

    def start(self) -> None:
        self._schedule_burst()

    def _schedule_burst(self) -> None:
        gap = self.rng.exponential(self.profile.gap_mean_us)
        self.engine.schedule_in(int(round(gap)), "arrival", self._burst_frame)

    def _burst_frame(self) -> None:
        if self._in_burst == 0:
            self.bursts += 1
        self._in_burst += 1
        self.frames_offered += 1
        self.offer()
        if self._in_burst < self.profile.frames_per_burst:
            self.engine.schedule_in(self.profile.period_us, "arrival", self._burst_frame)
        else:
            self._in_burst = 0
            self._schedule_burst()
