# src/stations.py

import logging
from collections import deque
from dataclasses import dataclass
from typing import Any, Deque, Dict, Optional

from .engine import Engine
from .lre import Frame, ReceiveLre, TransmitLre, TxPolicy
from .mac import DcfMac, MacResult, MacTimings
from .channel import Medium
from .metrics import MetricsCollector
from .schema import PostBackoff, RxPolicy
from .traffic import InterfererProfile, InterfererTraffic

logger = logging.getLogger(__name__)

SENDER_ID = "S"
RECEIVER_ID = "D"


def interferer_id(channel: int, index: int) -> str:
    return f"I{channel}.{index}"


def sink_id(channel: int) -> str:
    return f"sink{channel}"


@dataclass
class MacParams:
    cw_min: int = 31
    cw_max: int = 1023
    retry_limit: int = 7
    post_backoff: PostBackoff = "backlogged"


def _make_mac(
    node_id: str,
    engine: Engine,
    medium: Medium,
    timings: MacTimings,
    params: MacParams,
    user: Any = None,
) -> DcfMac:
    return DcfMac(
        node_id, engine, medium, timings,
        cw_min=params.cw_min, cw_max=params.cw_max,
        retry_limit=params.retry_limit, user=user,
        post_backoff=params.post_backoff,
    )


# -------------------------------
# S and D
# -------------------------------


class RedundantSender:
    """
    Node S: one sub-station MAC per channel behind a TransmitLre.

    `fanout` > 1 models a RAP serving several RSTAs: packet i is addressed
    to logical destination i % fanout.
    """

    def __init__(
        self,
        engine: Engine,
        media: Dict[int, Medium],
        timings: MacTimings,
        params: MacParams,
        policy: TxPolicy,
        metrics: MetricsCollector,
        payload_bytes: int = 50,
        fanout: int = 1,
    ) -> None:
        self.engine = engine
        self.metrics = metrics
        self.payload_bytes = payload_bytes
        self.fanout = fanout
        self.macs: Dict[int, DcfMac] = {
            k: _make_mac(SENDER_ID, engine, medium, timings, params)
            for k, medium in sorted(media.items())
        }
        self.lre = TransmitLre(engine, policy, self.macs, metrics)
        self._next_id = 0

    def send(self, now: int) -> Frame:
        """Generate the next application packet at `now` and queue it."""
        fid = self._next_id
        self._next_id += 1
        frame = Frame(
            id=fid,
            payload_size=self.payload_bytes,
            t_generated=now,
            dst=RECEIVER_ID,
            destination=fid % self.fanout,
        )
        self.metrics.on_generated(fid, now)
        self.lre.tx_enqueue(frame)
        return frame


class Receiver:
    """Node D: receive-only sub-station MACs feeding one ReceiveLre."""

    def __init__(
        self,
        engine: Engine,
        media: Dict[int, Medium],
        timings: MacTimings,
        params: MacParams,
        rx_policy: RxPolicy,
        reorder_timeout_us: int,
        metrics: MetricsCollector,
    ) -> None:
        self.lre = ReceiveLre(engine, rx_policy, reorder_timeout_us, metrics)
        self.macs: Dict[int, DcfMac] = {
            k: _make_mac(RECEIVER_ID, engine, medium, timings, params, user=self)
            for k, medium in sorted(media.items())
        }

    def on_receive(self, mac: DcfMac, frame: Frame) -> None:
        self.lre.rx_accept(frame, mac.channel)

    def on_mac_result(self, mac: DcfMac, result: MacResult) -> None:
        return

    def on_attempt(self, mac: DcfMac, frame: Any, now: int) -> None:
        return

    def on_retry(self, mac: DcfMac, frame: Any, rc: int) -> None:
        return


# -------------------------------
# Background traffic
# -------------------------------


@dataclass(eq=False)
class BulkFrame:
    id: int
    payload_size: int
    dst: str


class Interferer:
    """
    Interfering DCF station with its own bounded FIFO in front of the MAC.
    Frames offered while the buffer is full are dropped and counted.
    """

    def __init__(
        self,
        node_id: str,
        engine: Engine,
        medium: Medium,
        timings: MacTimings,
        params: MacParams,
        profile: InterfererProfile,
        destination: str,
    ) -> None:
        self.node_id = node_id
        self.profile = profile
        self.destination = destination
        self.mac = _make_mac(node_id, engine, medium, timings, params, user=self)
        self.buffer: Deque[BulkFrame] = deque()
        self.traffic = InterfererTraffic(
            engine, profile, self.offer,
            rng=engine.stream(f"interferer/{medium.channel}/{node_id}"),
        )
        self._next_id = 0

        self.offered = 0
        self.overflows = 0
        self.first_attempts = 0
        self.delivered = 0
        self.discarded = 0

    def start(self) -> None:
        self.traffic.start()

    def offer(self) -> None:
        frame = BulkFrame(self._next_id, self.profile.payload_bytes, self.destination)
        self._next_id += 1
        self.offered += 1
        if self.mac.is_idle and not self.buffer:
            self.mac.submit(frame)
        elif len(self.buffer) >= self.profile.buffer_capacity:
            self.overflows += 1
        else:
            self.buffer.append(frame)

    def on_attempt(self, mac: DcfMac, frame: BulkFrame, now: int) -> None:
        if mac.ctx.rc == 0:
            self.first_attempts += 1

    def on_retry(self, mac: DcfMac, frame: BulkFrame, rc: int) -> None:
        return

    def on_receive(self, mac: DcfMac, frame: Any) -> None:
        return

    def on_mac_result(self, mac: DcfMac, result: MacResult) -> None:
        if result.outcome == "delivered":
            self.delivered += 1
        else:
            self.discarded += 1
        if self.buffer and mac.is_idle:
            mac.submit(self.buffer.popleft())


def make_sink(
    channel: int,
    engine: Engine,
    medium: Medium,
    timings: MacTimings,
    params: Optional[MacParams] = None,
) -> DcfMac:
    """ACK-only destination of the interferers on one channel."""
    return _make_mac(sink_id(channel), engine, medium, timings, params or MacParams())
