# src/channel.py

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Protocol, Tuple

import numpy as np

from .engine import Engine
from .schema import GeState, Verdict

logger = logging.getLogger(__name__)

# Sojourn length used when a state can never be left (transition prob 0).
_FOREVER = 1 << 62


def per_step_bit_survival(p_bit: float, bits_per_step: float) -> float:
    """
    Probability that none of `bits_per_step` independent bits errs when each
    errs with probability `p_bit`: (1 - p_bit) ** bits_per_step.
    """
    if p_bit <= 0.0:
        return 1.0
    if p_bit >= 1.0:
        return 0.0 if bits_per_step > 0 else 1.0
    return float((1.0 - p_bit) ** bits_per_step)


def stationary_bad_fraction(p_gb: float, p_bg: float) -> float:
    """Long-run share of steps spent in the Bad state."""
    total = p_gb + p_bg
    if total == 0.0:
        return 0.0
    return p_gb / total


# -------------------------------
# Gilbert-Elliott disturbance
# -------------------------------


@dataclass
class GilbertElliott:
    """
    Two-state Markov disturbance process advanced in fixed steps.

    The process is advanced lazily: instead of drawing one transition per
    step, whole sojourns are drawn from the geometric distribution, which is
    the law of the number of steps spent in a state before leaving it. The
    state timeline depends only on the initial state and `rng`; bit-error
    draws come from the separate `bit_rng`, so asking for verdicts never
    perturbs the timeline.

    Parameters
    ----------
    p_gb, p_bg : float
        Per-step transition probabilities Good->Bad and Bad->Good.
    p_g, p_b : float
        Bit-error probabilities in the Good and Bad states.
    step_us : int
        Step duration in microseconds.
    bits_per_step : float
        Bits on air during one step (bit rate [Mbit/s] * step_us).
    """

    p_gb: float
    p_bg: float
    p_g: float
    p_b: float
    rng: np.random.Generator
    bit_rng: np.random.Generator
    step_us: int = 1
    bits_per_step: float = 54.0
    state: GeState = "good"
    last_advanced: int = 0

    # (start_us, end_us, state) for the generated part of the timeline
    _segments: Deque[Tuple[int, int, GeState]] = field(default_factory=deque)

    def __post_init__(self) -> None:
        for name in ("p_gb", "p_bg", "p_g", "p_b"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.step_us <= 0:
            raise ValueError("step_us must be positive")

    def _sojourn_steps(self, state: GeState) -> int:
        p_leave = self.p_gb if state == "good" else self.p_bg
        if p_leave <= 0.0:
            return _FOREVER
        return int(self.rng.geometric(p_leave))

    def advance(self, t: int) -> None:
        """Extend the state timeline so that it covers [.., t)."""
        while self.last_advanced < t:
            length = self._sojourn_steps(self.state) * self.step_us
            end = self.last_advanced + length
            self._segments.append((self.last_advanced, end, self.state))
            self.last_advanced = end
            self.state = "bad" if self.state == "good" else "good"

    def state_segments(self, t_start: int, t_end: int) -> List[Tuple[int, int, GeState]]:
        """
        Return the (start, end, state) pieces covering [t_start, t_end).
        Pieces entirely before t_start are dropped for good, so callers must
        query with non-decreasing t_start.
        """
        self.advance(t_end)
        segments = self._segments
        while segments and segments[0][1] <= t_start:
            segments.popleft()
        if segments and segments[0][0] > t_start:
            raise RuntimeError(
                f"disturbance timeline already discarded before t={t_start}"
            )

        pieces: List[Tuple[int, int, GeState]] = []
        for seg_start, seg_end, state in segments:
            if seg_start >= t_end:
                break
            pieces.append((max(seg_start, t_start), min(seg_end, t_end), state))
        return pieces

    def survival(self, t_start: int, t_end: int) -> float:
        """Probability that every bit sent over [t_start, t_end) survives."""
        survive = 1.0
        for piece_start, piece_end, state in self.state_segments(t_start, t_end):
            p_bit = self.p_g if state == "good" else self.p_b
            steps = (piece_end - piece_start) / self.step_us
            survive *= per_step_bit_survival(p_bit, self.bits_per_step * steps)
            if survive == 0.0:
                break
        return survive

    def corrupts(self, t_start: int, t_end: int) -> bool:
        """Draw whether at least one bit sent over [t_start, t_end) errs."""
        survive = self.survival(t_start, t_end)
        if survive >= 1.0:
            return False
        if survive <= 0.0:
            return True
        return bool(self.bit_rng.random() >= survive)

    def bad_occupancy(self, steps: int, rng: np.random.Generator) -> float:
        """
        Fraction of Bad steps over `steps` steps of a fresh run of this
        process driven by `rng` (the instance's own timeline is untouched).
        """
        if steps <= 0:
            return 0.0
        replay = GilbertElliott(
            p_gb=self.p_gb, p_bg=self.p_bg, p_g=self.p_g, p_b=self.p_b,
            rng=rng, bit_rng=rng, step_us=1,
        )
        bad = 0
        t = 0
        state: GeState = "good"
        while t < steps:
            length = min(replay._sojourn_steps(state), steps - t)
            if state == "bad":
                bad += length
            t += length
            state = "bad" if state == "good" else "good"
        return bad / steps


# -------------------------------
# Shared medium
# -------------------------------


@dataclass(eq=False)
class Transmission:
    """
    One frame on air over the half-open interval [t_start, t_end).
    `frame_ref` is the data frame itself, also for ACKs (an ACK refers to
    the data frame it confirms).
    """

    frame_ref: Any
    source: str
    destination: str
    t_start: int
    t_end: int
    bit_count: float
    is_ack: bool = False
    collided: bool = False


class MediumListener(Protocol):
    """What a station attached to a medium must implement."""

    node_id: str

    def on_medium_busy(self, now: int) -> None: ...

    def on_medium_idle(self, now: int) -> None: ...

    def on_transmission_sent(self, tx: Transmission, verdict: Verdict) -> None: ...

    def on_transmission_received(self, tx: Transmission, verdict: Verdict) -> None: ...


@dataclass
class Medium:
    """
    One radio channel: a single collision domain where every node hears
    every other node. Any temporal overlap corrupts all overlapping frames
    (no capture).
    """

    channel: int
    engine: Engine
    disturbance: Optional[GilbertElliott] = None
    bits_per_us: float = 54.0
    active: List[Transmission] = field(default_factory=list)
    busy_until: int = 0
    idle_since: int = 0
    stations: Dict[str, MediumListener] = field(default_factory=dict)
    airtime_by_source: Dict[str, int] = field(default_factory=dict)
    collisions: int = 0
    corrupted: int = 0

    def attach(self, station: MediumListener) -> None:
        self.stations[station.node_id] = station

    def carrier_busy(self, t: int) -> bool:
        """True iff some transmission covers instant t, which may not lie in the past."""
        if t < self.engine.now:
            raise ValueError(f"carrier sense at {t} is before now={self.engine.now}")
        # every frame on air started at or before now
        return t < self.busy_until

    def begin_transmission(
        self,
        source: str,
        destination: str,
        frame_ref: Any,
        airtime: int,
        is_ack: bool = False,
    ) -> Transmission:
        """
        Put a frame on air now. The caller has already applied its own
        access rules; the medium only arbitrates overlaps.
        """
        now = self.engine.now
        tx = Transmission(
            frame_ref=frame_ref,
            source=source,
            destination=destination,
            t_start=now,
            t_end=now + airtime,
            bit_count=airtime * self.bits_per_us,
            is_ack=is_ack,
        )

        overlapping = [other for other in self.active if other.t_end > now]
        was_idle = not overlapping
        if overlapping:
            tx.collided = True
            for other in overlapping:
                if not other.collided:
                    other.collided = True
            self.collisions += 1

        self.active.append(tx)
        self.busy_until = max(self.busy_until, tx.t_end)
        self.airtime_by_source[source] = self.airtime_by_source.get(source, 0) + airtime
        self.engine.schedule(tx.t_end, "tx-end", self._end_transmission, tx)

        if was_idle:
            for station in list(self.stations.values()):
                station.on_medium_busy(now)

        return tx

    def corruption_verdict(self, tx: Transmission) -> Verdict:
        """Decide the fate of a transmission at its end."""
        if tx.collided:
            return "collided"
        if self.disturbance is not None and self.disturbance.corrupts(tx.t_start, tx.t_end):
            return "bit_errors"
        return "ok"

    def _end_transmission(self, tx: Transmission) -> None:
        now = self.engine.now
        self.active.remove(tx)
        verdict = self.corruption_verdict(tx)
        if verdict == "bit_errors":
            self.corrupted += 1

        if self.busy_until <= now:
            self.idle_since = now
            for station in list(self.stations.values()):
                station.on_medium_idle(now)

        sender = self.stations.get(tx.source)
        if sender is not None:
            sender.on_transmission_sent(tx, verdict)
        receiver = self.stations.get(tx.destination)
        if receiver is not None:
            receiver.on_transmission_received(tx, verdict)

    def air_share(self, source: str, elapsed_us: int) -> float:
        """Fraction of `elapsed_us` during which `source` was on air."""
        if elapsed_us <= 0:
            return 0.0
        return self.airtime_by_source.get(source, 0) / elapsed_us
