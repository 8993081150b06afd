# src/lre.py

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Set

from .engine import Engine, Event
from .mac import DcfMac, MacResult
from .metrics import MetricsCollector
from .schema import ChannelStatus, FrameFlag, RxPolicy

logger = logging.getLogger(__name__)

TxMode = Literal["basic", "rda-q", "rda-r"]


# -------------------------------
# Frames and policy
# -------------------------------


@dataclass(eq=False)
class Frame:
    """
    One application packet plus its per-channel transmission state.

    `id` is the link-wide sequence number that orders frames for
    reordering and duplicate detection; `dst` is the receiving node and
    `destination` the logical RSTA index behind it (downlink fan-out).
    """

    id: int
    payload_size: int
    t_generated: int
    dst: str = "D"
    destination: int = 0
    per_channel: Dict[int, ChannelStatus] = field(default_factory=dict)
    flag: FrameFlag = "ready"
    attempts: Dict[int, int] = field(default_factory=dict)

    def pending_on(self, channel: int) -> bool:
        return self.per_channel.get(channel) in ("waiting", "in_mac")


@dataclass
class TxPolicy:
    """
    Transmitter dispatch policy.

    mode: basic (PoW, no duplicate avoidance), rda-q (queue scrub on XACK)
      or rda-r (queue scrub plus retry-counter abort).
    d_th: duplicate deferral threshold; 0 disables deferral.
    deferral_flags: run selection through the ready / deferrable /
      undeferrable flags. With d_th = 0 this selects exactly the head of
      the queue, like the plain path.
    """

    mode: TxMode = "basic"
    d_th: int = 0
    capacity: int = 2000
    deferral_flags: bool = True


# -------------------------------
# Transmitter side
# -------------------------------


class TransmitLre:
    """
    Transmit half of the Link Redundancy Entity.

    A single Q^tx is shared by all sub-station MACs; each frame tracks its
    status per channel. A frame leaves Q^tx once no channel holds it
    waiting or inside a MAC. `capacity` bounds the copies outstanding on
    each channel, so a channel that falls behind does not starve the other.
    """

    def __init__(
        self,
        engine: Engine,
        policy: TxPolicy,
        macs: Dict[int, DcfMac],
        metrics: Optional[MetricsCollector] = None,
    ) -> None:
        self.engine = engine
        self.policy = policy
        self.macs = macs
        self.metrics = metrics
        self.channels = sorted(macs)

        self.queue: Dict[int, Frame] = {}
        self.waiting: Dict[int, Dict[int, Frame]] = {k: {} for k in self.channels}
        self.undeferrable_waiting: Dict[int, int] = {k: 0 for k in self.channels}
        self.last_enqueued = -1

        # Counters
        self.overruns = 0
        self.channel_overruns: Dict[int, int] = {k: 0 for k in self.channels}
        self.scrubs = 0
        self.abort_requests = 0
        self.deferrals = 0
        self.xacks = 0

        for mac in macs.values():
            mac.user = self

    def queue_size(self, channel: int) -> int:
        """Copies outstanding on `channel`: waiting plus the one inside the MAC."""
        mac = self.macs[channel]
        in_mac = 0 if mac.ctx.current_frame is None else 1
        return len(self.waiting[channel]) + in_mac

    def _sample(self, channel: int) -> None:
        if self.metrics is not None:
            self.metrics.sample_queue_sizes(channel, self.engine.now, self.queue_size(channel))

    def _set_flag(self, frame: Frame, flag: FrameFlag) -> None:
        if frame.flag == flag:
            return
        for k in self.channels:
            if frame.id in self.waiting[k]:
                if frame.flag == "undeferrable":
                    self.undeferrable_waiting[k] -= 1
                if flag == "undeferrable":
                    self.undeferrable_waiting[k] += 1
        frame.flag = flag

    def _unwait(self, frame: Frame, channel: int, status: ChannelStatus) -> None:
        del self.waiting[channel][frame.id]
        if frame.flag == "undeferrable":
            self.undeferrable_waiting[channel] -= 1
        frame.per_channel[channel] = status

    def tx_enqueue(self, frame: Frame) -> bool:
        """
        Queue a new frame on every channel with room for it; the channels
        that are full mark their copy removed. Returns False when no channel
        has room and the frame is lost to a buffer overrun.
        """
        if frame.id <= self.last_enqueued:
            raise ValueError(
                f"frame ids must increase: got {frame.id} after {self.last_enqueued}"
            )
        self.last_enqueued = frame.id

        room = [k for k in self.channels if self.queue_size(k) < self.policy.capacity]
        if not room:
            self.overruns += 1
            if self.metrics is not None:
                self.metrics.on_overrun(frame.id)
            return False

        frame.flag = "undeferrable" if self.policy.d_th == 0 else "ready"
        self.queue[frame.id] = frame
        for k in self.channels:
            frame.attempts[k] = 0
            if k not in room:
                self.channel_overruns[k] += 1
                frame.per_channel[k] = "removed"
                continue
            frame.per_channel[k] = "waiting"
            self.waiting[k][frame.id] = frame
            if frame.flag == "undeferrable":
                self.undeferrable_waiting[k] += 1
            self._sample(k)

        for k in self.channels:
            self._dispatch(k)
        return True

    def select_next(self, channel: int) -> Optional[Frame]:
        """
        Pick the frame the idle MAC on `channel` sends next and move it into
        that MAC's custody (status in_mac, flag deferrable).

        The first undeferrable frame wins, then the first ready one; when
        every waiting frame is deferrable the first is sent anyway, which
        also covers the lone-frame case.
        """
        waiting = self.waiting[channel]
        if not waiting:
            return None

        head = next(iter(waiting.values()))
        if self.policy.mode == "basic" or not self.policy.deferral_flags:
            chosen = head
        elif self.undeferrable_waiting[channel] > 0:
            chosen = next(f for f in waiting.values() if f.flag == "undeferrable")
        else:
            chosen = next((f for f in waiting.values() if f.flag == "ready"), head)

        if chosen is not head:
            self.deferrals += 1

        self._unwait(chosen, channel, "in_mac")
        if self.policy.mode != "basic" and chosen.flag != "undeferrable":
            # d_th = 0 keeps every frame undeferrable
            self._set_flag(chosen, "deferrable" if self.policy.d_th > 0 else "undeferrable")
        return chosen

    def _dispatch(self, channel: int) -> None:
        mac = self.macs[channel]
        if not mac.is_idle:
            return
        frame = self.select_next(channel)
        if frame is None:
            return
        mac.submit(frame)

    # -------------------------------
    # MAC callbacks
    # -------------------------------

    def on_attempt(self, mac: DcfMac, frame: Frame, now: int) -> None:
        k = mac.channel
        frame.attempts[k] = frame.attempts.get(k, 0) + 1
        if frame.attempts[k] == 1 and self.metrics is not None:
            self.metrics.on_first_tx(frame.id, k, now)

    def on_retry(self, mac: DcfMac, frame: Frame, rc: int) -> None:
        if self.policy.mode != "basic" and rc >= self.policy.d_th:
            self._set_flag(frame, "undeferrable")

    def on_receive(self, mac: DcfMac, frame: Frame) -> None:
        # the sending side never receives data frames
        return

    def on_mac_result(self, mac: DcfMac, result: MacResult) -> None:
        k = mac.channel
        frame: Frame = result.frame
        if result.outcome == "delivered":
            frame.per_channel[k] = "delivered"
            self.on_xack(k, frame.id)
        else:
            # discarded at the retry limit, or aborted after an XACK
            frame.per_channel[k] = "discarded"
        self._retire_if_done(frame)
        for g in self.channels:
            self._sample(g)
        for g in self.channels:
            self._dispatch(g)

    def on_xack(self, channel: int, frame_id: int) -> None:
        """
        Cross-acknowledge: frame `frame_id` was confirmed on `channel`.
        rda-q scrubs the waiting copies on the other channels; rda-r also
        asks their MACs to abort a copy they are already working on.
        """
        self.xacks += 1
        if self.policy.mode == "basic":
            return
        frame = self.queue.get(frame_id)
        if frame is None:
            return
        for g in self.channels:
            if g == channel:
                continue
            status = frame.per_channel.get(g)
            if status == "waiting":
                self._unwait(frame, g, "removed")
                self.scrubs += 1
            elif status == "in_mac" and self.policy.mode == "rda-r":
                if self.macs[g].request_abort(frame_id):
                    self.abort_requests += 1
                    if logger.isEnabledFor(logging.DEBUG):
                        logger.debug("[LRE] t=%d abort frame %d on channel %d", self.engine.now, frame_id, g)

    def _retire_if_done(self, frame: Frame) -> None:
        if any(frame.pending_on(k) for k in self.channels):
            return
        self.queue.pop(frame.id, None)
        if self.metrics is not None:
            self.metrics.on_sender_done(frame.id)


# -------------------------------
# Receiver side
# -------------------------------


class RxWindow:
    """
    Receive buffer Q^rx of one link, with duplicate discard and (for the
    ordered policy) sliding-window reordering.

    Delivered frames are handed to `deliver` and also returned. Under the
    ordered policy every frame buffered behind a gap starts its own timeout
    on first-copy arrival; when it expires that frame, all buffered frames
    before it and the contiguous run after it are flushed, and the ids
    skipped on the way are reported to `on_skip` as lost.
    """

    def __init__(
        self,
        engine: Engine,
        policy: RxPolicy = "ordered",
        timeout_us: int = 10_000,
        first_id: int = 0,
        deliver: Optional[Callable[[List[Frame]], None]] = None,
        on_skip: Optional[Callable[[List[int]], None]] = None,
    ) -> None:
        self.engine = engine
        self.policy = policy
        self.timeout_us = timeout_us
        self.next_expected = first_id
        self.buffer: Dict[int, Frame] = {}
        self.pending_timeouts: Dict[int, Event] = {}
        self.seen: Set[int] = set()
        self.skipped: Set[int] = set()
        self.deliver = deliver
        self.on_skip = on_skip

        self.duplicates = 0
        self.late = 0
        self.delivered = 0

    def _emit(self, frames: List[Frame]) -> List[Frame]:
        if frames:
            self.delivered += len(frames)
            if self.deliver is not None:
                self.deliver(frames)
        return frames

    def accept(self, frame: Frame) -> List[Frame]:
        """Take one uncorrupted copy; return the frames released to the user."""
        fid = frame.id
        if self.policy == "unordered":
            if fid in self.seen:
                self.duplicates += 1
                return []
            self.seen.add(fid)
            return self._emit([frame])

        if fid < self.next_expected:
            if fid in self.skipped:
                self.late += 1
            else:
                self.duplicates += 1
            return []
        if fid in self.buffer:
            self.duplicates += 1
            return []

        if fid != self.next_expected:
            self.buffer[fid] = frame
            self.pending_timeouts[fid] = self.engine.schedule_in(
                self.timeout_us, "reorder-timeout", self._timeout_expired, fid
            )
            return []

        released = [frame]
        self.next_expected = fid + 1
        released.extend(self._release_contiguous())
        return self._emit(released)

    def _release_contiguous(self) -> List[Frame]:
        released: List[Frame] = []
        while self.next_expected in self.buffer:
            nid = self.next_expected
            released.append(self.buffer.pop(nid))
            self.engine.cancel(self.pending_timeouts.pop(nid, None))
            self.next_expected = nid + 1
        return released

    def _timeout_expired(self, frame_id: int) -> None:
        # Re-queue once at the same instant: arrivals already scheduled for
        # this instant are processed before the flush.
        self.pending_timeouts[frame_id] = self.engine.schedule(
            self.engine.now, "reorder-timeout", self.on_reorder_timeout, frame_id
        )

    def on_reorder_timeout(self, frame_id: int) -> List[Frame]:
        """Flush up to and including `frame_id`, then the contiguous run above it."""
        self.pending_timeouts.pop(frame_id, None)
        if frame_id not in self.buffer:
            return []

        released: List[Frame] = []
        skipped: List[int] = []
        for fid in range(self.next_expected, frame_id):
            buffered = self.buffer.pop(fid, None)
            if buffered is None:
                skipped.append(fid)
            else:
                self.engine.cancel(self.pending_timeouts.pop(fid, None))
                released.append(buffered)
        released.append(self.buffer.pop(frame_id))
        self.next_expected = frame_id + 1
        released.extend(self._release_contiguous())

        if skipped:
            self.skipped.update(skipped)
            if self.on_skip is not None:
                self.on_skip(skipped)
        return self._emit(released)


class ReceiveLre:
    """
    Receive half of the Link Redundancy Entity: one RxWindow per logical
    destination, shared by every sub-station MAC of the node.
    """

    def __init__(
        self,
        engine: Engine,
        policy: RxPolicy,
        timeout_us: int,
        metrics: Optional[MetricsCollector] = None,
    ) -> None:
        self.engine = engine
        self.policy = policy
        self.timeout_us = timeout_us
        self.metrics = metrics
        self.windows: Dict[int, RxWindow] = {}

    def window(self, destination: int) -> RxWindow:
        win = self.windows.get(destination)
        if win is None:
            win = RxWindow(
                self.engine,
                policy=self.policy,
                timeout_us=self.timeout_us,
                deliver=self._deliver,
                on_skip=self._skip,
            )
            self.windows[destination] = win
        return win

    def rx_accept(self, frame: Frame, channel: int) -> List[Frame]:
        if self.metrics is not None:
            self.metrics.on_peer_received(frame.id, self.engine.now)
        return self.window(frame.destination).accept(frame)

    def _deliver(self, frames: List[Frame]) -> None:
        if self.metrics is None:
            return
        now = self.engine.now
        for frame in frames:
            self.metrics.on_user_delivered(frame.id, now)

    def _skip(self, frame_ids: List[int]) -> None:
        if self.metrics is None:
            return
        for fid in frame_ids:
            self.metrics.on_reorder_skip(fid)

    @property
    def duplicates(self) -> int:
        return sum(w.duplicates for w in self.windows.values())

    @property
    def late(self) -> int:
        return sum(w.late for w in self.windows.values())
