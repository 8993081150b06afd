# src/engine.py

import hashlib
import heapq
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

EventKind = Literal[
    "arrival",
    "tx-start",
    "tx-end",
    "ack-timeout",
    "backoff-slot",
    "reorder-timeout",
    "run-end",
]


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current virtual time."""


@dataclass(eq=False)
class Event:
    """
    A pending action in virtual time.

    Events are ordered by (fire_time, seq); seq is assigned by the engine at
    insertion, so events sharing an instant fire in insertion order.
    """

    fire_time: int
    seq: int
    kind: EventKind
    callback: Callable[..., Any]
    payload: Any = None
    cancelled: bool = False
    fired: bool = False


@dataclass(frozen=True)
class RngStream:
    """
    One independent random stream, identified by the master seed and a label.

    The label is hashed with blake2b (not Python's salted hash()), so the same
    (seed, stream_id) pair yields the same draws in every process.
    """

    seed: int
    stream_id: str

    def entropy(self) -> List[int]:
        digest = hashlib.blake2b(self.stream_id.encode("utf-8"), digest_size=8).digest()
        return [self.seed & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest, "big")]

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.entropy()))


@dataclass
class Engine:
    """
    Single-threaded discrete-event scheduler.

    Time is an integer number of microseconds. Cancellation is lazy: a
    cancelled event stays in the heap and is skipped when popped.
    """

    seed: int = 0
    now: int = 0
    processed: int = 0
    _heap: List[Tuple[int, int, Event]] = field(default_factory=list)
    _seq: int = 0
    _live: int = 0
    _streams: Dict[str, np.random.Generator] = field(default_factory=dict)

    # -------------------------------
    # Scheduling
    # -------------------------------

    def schedule(
        self,
        fire_time: int,
        kind: EventKind,
        callback: Callable[..., Any],
        payload: Any = None,
    ) -> Event:
        """
        Insert an event; the returned Event is the handle used by cancel().
        The callback is invoked as callback(payload) when payload is not None,
        else callback().
        """
        if fire_time < self.now:
            raise SchedulingError(
                f"cannot schedule {kind} at t={fire_time} before now={self.now}"
            )
        event = Event(fire_time=int(fire_time), seq=self._seq, kind=kind,
                      callback=callback, payload=payload)
        self._seq += 1
        self._live += 1
        heapq.heappush(self._heap, (event.fire_time, event.seq, event))
        return event

    def schedule_in(
        self,
        delay: int,
        kind: EventKind,
        callback: Callable[..., Any],
        payload: Any = None,
    ) -> Event:
        return self.schedule(self.now + delay, kind, callback, payload)

    def cancel(self, handle: Optional[Event]) -> bool:
        """Return True iff the event was pending and is now removed."""
        if handle is None or handle.fired or handle.cancelled:
            return False
        handle.cancelled = True
        self._live -= 1
        return True

    def pending(self) -> int:
        return self._live

    # -------------------------------
    # Main loop
    # -------------------------------

    def run_until(self, t_end: int) -> None:
        """
        Process every event with fire_time <= t_end in (fire_time, seq) order,
        then set now = t_end.
        """
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before now={self.now}")

        heap = self._heap
        debug = logger.isEnabledFor(logging.DEBUG)

        while heap and heap[0][0] <= t_end:
            fire_time, _, event = heapq.heappop(heap)
            if event.cancelled:
                continue
            self.now = fire_time
            event.fired = True
            self._live -= 1
            self.processed += 1
            if debug:
                logger.debug("[ENGINE] t=%d %s", fire_time, event.kind)
            if event.payload is None:
                event.callback()
            else:
                event.callback(event.payload)

        self.now = t_end

    # -------------------------------
    # Randomness
    # -------------------------------

    def stream(self, label: str) -> np.random.Generator:
        """
        Return the generator dedicated to one stochastic source.
        Streams are created on first use and cached per label.
        """
        rng = self._streams.get(label)
        if rng is None:
            rng = RngStream(self.seed, label).generator()
            self._streams[label] = rng
        return rng
