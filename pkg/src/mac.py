# src/mac.py

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Protocol

from .channel import Medium, Transmission
from .engine import Engine, Event
from .schema import MacOutcome, MacState, PostBackoff, Verdict

logger = logging.getLogger(__name__)


class MacStateError(RuntimeError):
    """Raised when the MAC is driven outside its automaton (e.g. submit while busy)."""


class AirFrame(Protocol):
    """The attributes the MAC needs from whatever it carries."""

    id: int
    payload_size: int
    dst: str


@dataclass
class MacTimings:
    """
    DCF timing constants in microseconds.

    Airtimes are configured per payload size rather than derived from a PHY
    model; `airtimes` maps payload bytes -> on-air microseconds.
    """

    slot_us: int = 20
    sifs_us: int = 10
    difs_us: int = 50
    ack_airtime_us: int = 34
    ack_timeout_us: int = 64
    airtimes: Dict[int, int] = field(default_factory=lambda: {50: 38, 1500: 254})

    def data_airtime(self, payload_size: int) -> int:
        try:
            return self.airtimes[payload_size]
        except KeyError:
            raise ValueError(
                f"no airtime configured for {payload_size} B payloads"
            ) from None


@dataclass
class MacContext:
    """DCF state of one sub-station."""

    channel: int
    cw_min: int = 31
    cw_max: int = 1023
    rl: int = 7
    cw: int = 31
    rc: int = 0
    backoff_remaining: int = 0
    state: MacState = "idle"
    current_frame: Optional[Any] = None
    abort_requested: bool = False


@dataclass
class MacResult:
    outcome: MacOutcome
    frame: Any
    attempts: int


class MacUser(Protocol):
    """Upper layer of a MAC (the LRE, or an interferer's own queue)."""

    def on_mac_result(self, mac: "DcfMac", result: MacResult) -> None: ...

    def on_attempt(self, mac: "DcfMac", frame: Any, now: int) -> None: ...

    def on_retry(self, mac: "DcfMac", frame: Any, rc: int) -> None: ...

    def on_receive(self, mac: "DcfMac", frame: Any) -> None: ...


class DcfMac:
    """
    IEEE 802.11 DCF automaton for one sub-station on one channel.

    Backoff is counted analytically: while the medium is idle a single
    "backoff-slot" event is armed at the instant the countdown would reach
    zero; when the medium turns busy the event is cancelled and only the
    slots that were idle for their full duration are subtracted.

    After every Delivered / Discarded / Aborted outcome the contention
    window is reset. With `post_backoff="always"` a post-backoff drawn from
    [0, cw_min] is run before the next frame may access the medium. With
    "backlogged" the backoff is drawn only when the next frame is handed
    over at the very instant of the outcome; a frame arriving later finds
    the MAC idle and goes out after DIFS, as any first access.
    """

    def __init__(
        self,
        node_id: str,
        engine: Engine,
        medium: Medium,
        timings: MacTimings,
        cw_min: int = 31,
        cw_max: int = 1023,
        retry_limit: int = 7,
        user: Optional[MacUser] = None,
        post_backoff: PostBackoff = "always",
    ) -> None:
        self.node_id = node_id
        self.engine = engine
        self.medium = medium
        self.timings = timings
        self.ctx = MacContext(
            channel=medium.channel, cw_min=cw_min, cw_max=cw_max,
            rl=retry_limit, cw=cw_min,
        )
        self.user = user
        self.post_backoff = post_backoff
        self.rng = engine.stream(f"backoff/{node_id}/{medium.channel}")

        self._countdown: Optional[Event] = None
        self._countdown_origin = 0
        self._ack_timer: Optional[Event] = None
        # access attempted without a drawn backoff (medium idle at submit)
        self._fresh_access = False
        # abort asked while the frame waits for its next attempt
        self._abort_latched = False
        # instant of the last outcome, for back-to-back frames
        self._completed_at: Optional[int] = None

        # Counters
        self.air_attempts = 0
        self.first_attempt_successes = 0
        self.deliveries = 0
        self.discards = 0
        self.aborts = 0
        self.ack_timeouts = 0
        self.stray_acks = 0
        self.acks_sent = 0

        medium.attach(self)

    @property
    def channel(self) -> int:
        return self.ctx.channel

    @property
    def is_idle(self) -> bool:
        return self.ctx.state == "idle" and self.ctx.current_frame is None

    # -------------------------------
    # Transmit side
    # -------------------------------

    def submit(self, frame: AirFrame) -> None:
        """
        Hand one frame to the MAC. With no post-backoff pending, no outcome
        at this same instant and the medium idle for at least DIFS, the
        frame goes on air immediately.
        """
        ctx = self.ctx
        if not self.is_idle:
            raise MacStateError(
                f"{self.node_id}[{ctx.channel}] busy with frame "
                f"{getattr(ctx.current_frame, 'id', None)} in state {ctx.state}"
            )

        ctx.current_frame = frame
        ctx.rc = 0
        ctx.abort_requested = False
        self._abort_latched = False
        now = self.engine.now

        if self._countdown is not None:
            # post-backoff still running: the frame rides on it
            ctx.state = "backoff"
            return

        if ctx.backoff_remaining == 0:
            if self.medium.carrier_busy(now) or self._completed_at == now:
                ctx.backoff_remaining = self._draw_backoff()
            else:
                self._fresh_access = True

        ctx.state = "deferring"
        if not self.medium.carrier_busy(now):
            self._arm(now)

    def _draw_backoff(self) -> int:
        self._fresh_access = False
        return int(self.rng.integers(0, self.ctx.cw + 1))

    def _arm(self, now: int) -> None:
        """Start (or resume) the countdown on an idle medium."""
        ctx = self.ctx
        origin = max(self.medium.idle_since + self.timings.difs_us, now)
        fire_time = origin + ctx.backoff_remaining * self.timings.slot_us
        self._countdown_origin = origin
        if ctx.current_frame is not None:
            ctx.state = "backoff"
        if fire_time == now:
            self._countdown = None
            self._countdown_done()
        else:
            self._countdown = self.engine.schedule(
                fire_time, "backoff-slot", self._on_countdown
            )

    def _freeze(self, now: int) -> None:
        ctx = self.ctx
        countdown = self._countdown
        if countdown is None or countdown.fire_time <= now:
            # nothing armed, or it completes at this very instant
            return
        self.engine.cancel(countdown)
        self._countdown = None
        if now > self._countdown_origin:
            elapsed = (now - self._countdown_origin) // self.timings.slot_us
            ctx.backoff_remaining = max(0, ctx.backoff_remaining - elapsed)
        if ctx.backoff_remaining == 0 and self._fresh_access:
            # medium seized during our DIFS: fall back to a random backoff
            ctx.backoff_remaining = self._draw_backoff()
        if ctx.current_frame is not None:
            ctx.state = "deferring"

    def _on_countdown(self) -> None:
        self._countdown = None
        self._countdown_done()

    def _countdown_done(self) -> None:
        ctx = self.ctx
        ctx.backoff_remaining = 0
        self._fresh_access = False
        if ctx.current_frame is None:
            ctx.state = "idle"
            return
        self._transmit()

    def _transmit(self) -> None:
        ctx = self.ctx
        frame = ctx.current_frame
        now = self.engine.now
        ctx.state = "transmitting"
        if self._abort_latched:
            ctx.abort_requested = True
            self._abort_latched = False
        self.air_attempts += 1
        if self.user is not None:
            self.user.on_attempt(self, frame, now)
        self.medium.begin_transmission(
            source=self.node_id,
            destination=frame.dst,
            frame_ref=frame,
            airtime=self.timings.data_airtime(frame.payload_size),
        )

    def on_transmission_sent(self, tx: Transmission, verdict: Verdict) -> None:
        if tx.is_ack:
            return
        ctx = self.ctx
        if ctx.state != "transmitting" or tx.frame_ref is not ctx.current_frame:
            return
        ctx.state = "awaiting_ack"
        self._ack_timer = self.engine.schedule_in(
            self.timings.ack_timeout_us, "ack-timeout", self._on_ack_timer
        )

    def _on_ack_timer(self) -> None:
        self._ack_timer = None
        self.on_ack_timeout()

    def on_ack_received(self, frame_id: int) -> Optional[MacResult]:
        """Close the exchange of the current frame; stray ACKs are only counted."""
        ctx = self.ctx
        frame = ctx.current_frame
        if ctx.state != "awaiting_ack" or frame is None or frame.id != frame_id:
            self.stray_acks += 1
            return None
        self.engine.cancel(self._ack_timer)
        self._ack_timer = None
        attempts = ctx.rc + 1
        self.deliveries += 1
        if attempts == 1:
            self.first_attempt_successes += 1
        return self._complete("delivered", attempts)

    def on_ack_timeout(self) -> MacResult:
        """
        No ACK before ACKTimeout: abort if asked to, discard at the retry
        limit, otherwise double the contention window and retry.
        """
        ctx = self.ctx
        if ctx.state != "awaiting_ack":
            raise MacStateError(f"ACK timeout in state {ctx.state}")
        self.ack_timeouts += 1
        attempts = ctx.rc + 1

        if ctx.abort_requested:
            self.aborts += 1
            return self._complete("aborted", attempts)

        ctx.rc += 1
        if self.user is not None:
            self.user.on_retry(self, ctx.current_frame, ctx.rc)
        if ctx.rc >= ctx.rl:
            self.discards += 1
            return self._complete("discarded", attempts)

        ctx.cw = min(2 * (ctx.cw + 1) - 1, ctx.cw_max)
        ctx.backoff_remaining = self._draw_backoff()
        ctx.state = "deferring"
        now = self.engine.now
        if not self.medium.carrier_busy(now):
            self._arm(now)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("[MAC] %s[%d] retry %d cw=%d", self.node_id, ctx.channel, ctx.rc, ctx.cw)
        return MacResult("retrying", ctx.current_frame, attempts)

    def request_abort(self, frame_id: int) -> bool:
        """
        RDA/R abort: behave as if the retry counter had reached the limit.
        The attempt in progress (or the next one, if the frame is waiting in
        backoff) still completes; the abort bites at its ACK timeout.
        """
        ctx = self.ctx
        frame = ctx.current_frame
        if frame is None or frame.id != frame_id:
            return False
        if ctx.state in ("transmitting", "awaiting_ack"):
            ctx.abort_requested = True
        else:
            self._abort_latched = True
        return True

    def _complete(self, outcome: MacOutcome, attempts: int) -> MacResult:
        ctx = self.ctx
        frame = ctx.current_frame
        ctx.current_frame = None
        ctx.abort_requested = False
        self._abort_latched = False
        ctx.cw = ctx.cw_min
        ctx.state = "idle"

        now = self.engine.now
        self._completed_at = now
        if self.post_backoff == "always":
            ctx.backoff_remaining = self._draw_backoff()
            if not self.medium.carrier_busy(now):
                self._arm(now)
        else:
            ctx.backoff_remaining = 0

        result = MacResult(outcome, frame, attempts)
        if self.user is not None:
            self.user.on_mac_result(self, result)
        return result

    # -------------------------------
    # Carrier sense
    # -------------------------------

    def on_medium_busy(self, now: int) -> None:
        self._freeze(now)

    def on_medium_idle(self, now: int) -> None:
        ctx = self.ctx
        if self._countdown is not None:
            return
        if ctx.state in ("transmitting", "awaiting_ack"):
            return
        if ctx.current_frame is None and ctx.backoff_remaining == 0:
            return
        self._arm(now)

    # -------------------------------
    # Receive side
    # -------------------------------

    def on_transmission_received(self, tx: Transmission, verdict: Verdict) -> None:
        if verdict != "ok":
            return
        if tx.is_ack:
            self.on_ack_received(tx.frame_ref.id)
            return
        # unicast data: ACK after SIFS, whatever the LRE later does with it
        self.engine.schedule_in(self.timings.sifs_us, "tx-start", self._send_ack, tx)
        if self.user is not None:
            self.user.on_receive(self, tx.frame_ref)

    def _send_ack(self, data_tx: Transmission) -> None:
        self.acks_sent += 1
        self.medium.begin_transmission(
            source=self.node_id,
            destination=data_tx.source,
            frame_ref=data_tx.frame_ref,
            airtime=self.timings.ack_airtime_us,
            is_ack=True,
        )
