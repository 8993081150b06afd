# src/metrics.py

import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .schema import Outcome, PacketRecord, RunReport

logger = logging.getLogger(__name__)

# Deadline thresholds of the miss ratios, in microseconds
DEADLINES_US = {"p_d_gt_1ms": 1_000, "p_d_gt_10ms": 10_000, "p_d_gt_100ms": 100_000}

PERCENTILES = {"d_p95": 0.95, "d_p99": 0.99, "d_p99_5": 0.995, "d_p99_9": 0.999}


def percentile(samples: Sequence[int], p: float) -> Optional[int]:
    """
    Nearest-rank percentile: the value at 1-based rank ceil(p * n) of the
    sorted sample. Returns None for an empty sample.
    """
    n = len(samples)
    if n == 0:
        return None
    ordered = np.sort(np.asarray(samples, dtype=np.int64))
    # tolerance keeps exact products such as 0.95 * 100 on their own rank
    rank = max(1, math.ceil(p * n - 1e-9))
    return int(ordered[min(rank, n) - 1])


class QueueSampler:
    """
    Time-weighted mean of the per-channel Q^tx occupancy, updated at every
    queue mutation and restricted to the window [start_us, stop_us).
    """

    def __init__(self, channels: Iterable[int], start_us: int = 0) -> None:
        self.start_us = start_us
        self.stop_us: Optional[int] = None
        self._last_t: Dict[int, int] = {k: 0 for k in channels}
        self._last_q: Dict[int, int] = {k: 0 for k in self._last_t}
        self._area: Dict[int, float] = {k: 0.0 for k in self._last_t}

    def _accumulate(self, channel: int, now: int) -> None:
        if self.stop_us is not None:
            now = min(now, self.stop_us)
        t0 = max(self._last_t[channel], self.start_us)
        if now > t0:
            self._area[channel] += self._last_q[channel] * (now - t0)
        self._last_t[channel] = max(self._last_t[channel], now)

    def stop(self, at: int) -> None:
        """Close the window at `at`, which must not precede the last sample."""
        if any(t > at for t in self._last_t.values()):
            raise ValueError(f"queue window cannot close at {at}: already sampled past it")
        self.stop_us = at

    def sample(self, channel: int, now: int, size: int) -> None:
        self._accumulate(channel, now)
        self._last_q[channel] = size

    def mean(self, channel: int, t_end: int) -> Optional[float]:
        if channel not in self._area:
            return None
        if self.stop_us is not None:
            t_end = min(t_end, self.stop_us)
        span = t_end - self.start_us
        if span <= 0:
            return 0.0
        self._accumulate(channel, t_end)
        return self._area[channel] / span


class MetricsCollector:
    """
    Per-packet bookkeeping for one run.

    Records live only while their packet is unresolved; once an outcome is
    known the record is folded into the run accumulators by record() and
    dropped. Packets generated before `warmup_us` are tracked (so the
    protocol state stays consistent) but never counted.
    """

    def __init__(self, channels: Iterable[int], warmup_us: int = 0, d_min_us: int = 38) -> None:
        self.channels = list(channels)
        self.warmup_us = warmup_us
        self.d_min_us = d_min_us
        self.queues = QueueSampler(self.channels, start_us=warmup_us)
        self.pending: Dict[int, PacketRecord] = {}

        self.latencies: List[int] = []
        self.dq_sum = 0.0
        self.dt_sum = 0.0
        self.dr_sum = 0.0
        self.outcomes: Dict[Outcome, int] = {
            "delivered": 0,
            "lost_overrun": 0,
            "lost_retry_limit": 0,
            "lost_reorder_skip": 0,
        }
        self.generated = 0
        self.warmup_excluded = 0

    # -------------------------------
    # Packet life-cycle hooks
    # -------------------------------

    def on_generated(self, frame_id: int, t_generated: int) -> None:
        self.pending[frame_id] = {
            "id": frame_id,
            "t_generated": t_generated,
            "t_first_tx_start": {},
            "t_delivered_to_mac_peer": None,
            "t_delivered_to_user": None,
            "outcome": None,
        }

    def _resolve(self, frame_id: int, outcome: Outcome) -> None:
        packet = self.pending.pop(frame_id, None)
        if packet is None:
            return
        packet["outcome"] = outcome
        self.record(packet)

    def on_overrun(self, frame_id: int) -> None:
        self._resolve(frame_id, "lost_overrun")

    def on_first_tx(self, frame_id: int, channel: int, now: int) -> None:
        packet = self.pending.get(frame_id)
        if packet is not None:
            packet["t_first_tx_start"].setdefault(channel, now)

    def on_peer_received(self, frame_id: int, now: int) -> None:
        packet = self.pending.get(frame_id)
        if packet is not None and packet["t_delivered_to_mac_peer"] is None:
            packet["t_delivered_to_mac_peer"] = now

    def on_user_delivered(self, frame_id: int, now: int) -> None:
        packet = self.pending.get(frame_id)
        if packet is None:
            return
        packet["t_delivered_to_user"] = now
        self._resolve(frame_id, "delivered")

    def on_sender_done(self, frame_id: int) -> None:
        """Every copy left the sender; with none received the packet is gone."""
        packet = self.pending.get(frame_id)
        if packet is not None and packet["t_delivered_to_mac_peer"] is None:
            self._resolve(frame_id, "lost_retry_limit")

    def on_reorder_skip(self, frame_id: int) -> None:
        self._resolve(frame_id, "lost_reorder_skip")

    def sample_queue_sizes(self, channel: int, now: int, size: int) -> None:
        self.queues.sample(channel, now, size)

    # -------------------------------
    # Accumulation
    # -------------------------------

    def record(self, packet: PacketRecord) -> None:
        """Fold one resolved packet into the run statistics."""
        if packet["t_generated"] < self.warmup_us:
            self.warmup_excluded += 1
            return
        self.generated += 1
        outcome = packet["outcome"]
        if outcome is None:
            raise RuntimeError(f"packet {packet['id']} recorded without an outcome")
        self.outcomes[outcome] += 1
        if outcome != "delivered":
            return

        t_gen = packet["t_generated"]
        t_first = min(packet["t_first_tx_start"].values())
        t_peer = packet["t_delivered_to_mac_peer"]
        t_user = packet["t_delivered_to_user"]
        self.latencies.append(t_user - t_gen)
        self.dq_sum += t_first - t_gen
        self.dt_sum += t_peer - t_first
        self.dr_sum += t_user - t_peer

    def in_flight(self) -> int:
        return sum(1 for p in self.pending.values() if p["t_generated"] >= self.warmup_us)

    def report(self, t_end: int, counters: Optional[Dict[str, int]] = None) -> RunReport:
        """Summarize everything recorded so far into a RunReport."""
        counters = counters or {}
        delivered = self.outcomes["delivered"]
        lost = (
            self.outcomes["lost_overrun"]
            + self.outcomes["lost_retry_limit"]
            + self.outcomes["lost_reorder_skip"]
        )
        resolved = delivered + lost

        d = np.asarray(self.latencies, dtype=np.int64)

        def ratio(count: int) -> float:
            return count / resolved if resolved else 0.0

        def over(threshold: int) -> int:
            return int(np.count_nonzero(d > threshold)) if d.size else 0

        q = {k: self.queues.mean(k, t_end) for k in (1, 2)}
        present = [v for v in q.values() if v is not None]

        report: RunReport = {
            "d_mean": float(d.mean()) if d.size else None,
            "d_std": float(d.std()) if d.size else None,
            "d_min": int(d.min()) if d.size else None,
            "d_p95": percentile(d, PERCENTILES["d_p95"]),
            "d_p99": percentile(d, PERCENTILES["d_p99"]),
            "d_p99_5": percentile(d, PERCENTILES["d_p99_5"]),
            "d_p99_9": percentile(d, PERCENTILES["d_p99_9"]),
            "d_max": int(d.max()) if d.size else None,
            "dq_mean": self.dq_sum / delivered if delivered else None,
            "dt_mean": self.dt_sum / delivered if delivered else None,
            "dr_mean": self.dr_sum / delivered if delivered else None,
            "p_d_gt_dmin": ratio(over(self.d_min_us) + lost),
            "p_d_gt_1ms": ratio(over(DEADLINES_US["p_d_gt_1ms"]) + lost),
            "p_d_gt_10ms": ratio(over(DEADLINES_US["p_d_gt_10ms"]) + lost),
            "p_d_gt_100ms": ratio(over(DEADLINES_US["p_d_gt_100ms"]) + lost),
            "p_lost": ratio(lost),
            "q_mean_1": q[1],
            "q_mean_2": q[2],
            "q_mean": sum(present) / len(present) if present else None,
            "generated": self.generated + self.in_flight(),
            "delivered": delivered,
            "lost_overrun": self.outcomes["lost_overrun"],
            "lost_retry_limit": self.outcomes["lost_retry_limit"],
            "lost_reorder_skip": self.outcomes["lost_reorder_skip"],
            "in_flight": self.in_flight(),
            "duplicates_discarded": counters.get("duplicates_discarded", 0),
            "late_discarded": counters.get("late_discarded", 0),
            "aborts": counters.get("aborts", 0),
            "scrubs": counters.get("scrubs", 0),
            "deferrals": counters.get("deferrals", 0),
            "air_attempts_1": counters.get("air_attempts_1", 0),
            "air_attempts_2": counters.get("air_attempts_2", 0),
            "stray_acks": counters.get("stray_acks", 0),
        }
        return report
