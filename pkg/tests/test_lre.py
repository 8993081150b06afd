# tests/test_lre.py

from types import SimpleNamespace

import numpy as np
import pytest

from src.engine import Engine
from src.lre import Frame, ReceiveLre, RxWindow, TransmitLre, TxPolicy
from src.mac import MacResult


class FakeMac:
    """Stands in for a DcfMac: the test decides when attempts end."""

    def __init__(self, channel):
        self.channel = channel
        self.ctx = SimpleNamespace(current_frame=None)
        self.user = None
        self.submitted = []
        self.abort_calls = []

    @property
    def is_idle(self):
        return self.ctx.current_frame is None

    def submit(self, frame):
        assert self.is_idle
        self.ctx.current_frame = frame
        self.submitted.append(frame.id)

    def request_abort(self, frame_id):
        frame = self.ctx.current_frame
        if frame is None or frame.id != frame_id:
            return False
        self.abort_calls.append(frame_id)
        return True

    def attempt(self, now=0):
        self.user.on_attempt(self, self.ctx.current_frame, now)

    def retry(self, rc):
        self.user.on_retry(self, self.ctx.current_frame, rc)

    def finish(self, outcome, attempts=1):
        frame = self.ctx.current_frame
        self.ctx.current_frame = None
        self.user.on_mac_result(self, MacResult(outcome, frame, attempts))


def _tx(mode="rda-q", d_th=0, capacity=2000, deferral_flags=True):
    macs = {1: FakeMac(1), 2: FakeMac(2)}
    lre = TransmitLre(Engine(), TxPolicy(mode, d_th, capacity, deferral_flags), macs)
    return lre, macs


def _frame(fid):
    return Frame(id=fid, payload_size=50, t_generated=0)


# -------------------------------
# Transmitter
# -------------------------------


def test_enqueue_feeds_every_idle_mac():
    lre, macs = _tx()
    for fid in range(3):
        assert lre.tx_enqueue(_frame(fid))
    assert macs[1].submitted == [0]
    assert macs[2].submitted == [0]
    assert lre.queue_size(1) == 3
    assert lre.queue_size(2) == 3


def test_frame_ids_must_increase():
    lre, _ = _tx()
    lre.tx_enqueue(_frame(4))
    with pytest.raises(ValueError):
        lre.tx_enqueue(_frame(4))


def test_full_queue_drops_new_frames():
    lre, _ = _tx(capacity=2)
    assert lre.tx_enqueue(_frame(0))
    assert lre.tx_enqueue(_frame(1))
    assert lre.tx_enqueue(_frame(2)) is False
    assert lre.overruns == 1
    assert 2 not in lre.queue


def test_full_channel_does_not_block_the_other_one():
    lre, macs = _tx("basic", capacity=2)
    lre.tx_enqueue(_frame(0))
    lre.tx_enqueue(_frame(1))
    macs[2].finish("delivered")
    macs[2].finish("delivered")   # channel 2 drained, channel 1 stuck on 0
    assert lre.queue_size(1) == 2
    assert lre.queue_size(2) == 0

    frame = _frame(2)
    assert lre.tx_enqueue(frame)
    assert frame.per_channel == {1: "removed", 2: "in_mac"}
    assert lre.channel_overruns == {1: 1, 2: 0}
    assert lre.overruns == 0
    assert macs[2].submitted == [0, 1, 2]

    macs[2].finish("delivered")
    assert 2 not in lre.queue
    assert lre.queue_size(1) == 2


def test_xack_scrubs_waiting_copy():
    lre, macs = _tx("rda-q")
    for fid in range(3):
        lre.tx_enqueue(_frame(fid))
    macs[1].finish("delivered")   # 0 on channel 1; channel 2 still holds 0
    macs[1].finish("delivered")   # 1 on channel 1; channel 2's copy of 1 is waiting
    assert lre.scrubs == 1
    macs[2].finish("delivered")   # 0 on channel 2
    assert macs[1].submitted == [0, 1, 2]
    assert macs[2].submitted == [0, 2]
    assert sorted(lre.queue) == [2]


def test_basic_mode_sends_every_copy():
    lre, macs = _tx("basic")
    for fid in range(3):
        lre.tx_enqueue(_frame(fid))
    macs[1].finish("delivered")
    macs[1].finish("delivered")
    macs[2].finish("delivered")
    assert lre.scrubs == 0
    assert macs[2].submitted == [0, 1]


def test_rda_r_asks_the_other_mac_to_abort():
    lre, macs = _tx("rda-r")
    lre.tx_enqueue(_frame(0))
    macs[1].finish("delivered")
    assert macs[2].abort_calls == [0]
    assert lre.abort_requests == 1
    macs[2].finish("aborted")
    assert lre.queue == {}


def test_rda_q_never_aborts():
    lre, macs = _tx("rda-q")
    lre.tx_enqueue(_frame(0))
    macs[1].finish("delivered")
    assert macs[2].abort_calls == []


def test_frame_leaves_queue_when_every_copy_is_done():
    lre, macs = _tx("basic")
    lre.tx_enqueue(_frame(0))
    macs[1].finish("discarded", attempts=7)
    assert 0 in lre.queue
    macs[2].finish("delivered")
    assert lre.queue == {}
    assert lre.queue_size(1) == 0


def test_deferral_skips_duplicates_of_frames_on_air_elsewhere():
    lre, macs = _tx("rda-q", d_th=2)
    lre.tx_enqueue(_frame(0))      # lone frame: both MACs take it
    lre.tx_enqueue(_frame(1))
    lre.tx_enqueue(_frame(2))
    macs[1].finish("delivered")    # channel 1 moves on to 1 (now deferrable)
    assert macs[1].submitted == [0, 1]
    macs[2].finish("delivered")    # channel 2 defers 1 and sends 2
    assert macs[2].submitted == [0, 2]
    assert lre.deferrals == 1

    macs[1].attempt()
    macs[1].retry(1)
    macs[1].retry(2)               # rc reached d_th: 1 becomes undeferrable
    assert lre.queue[1].flag == "undeferrable"
    macs[2].finish("delivered")
    assert macs[2].submitted == [0, 2, 1]


def test_deferral_threshold_zero_keeps_fifo_order():
    lre, macs = _tx("rda-q", d_th=0)
    lre.tx_enqueue(_frame(0))
    lre.tx_enqueue(_frame(1))
    lre.tx_enqueue(_frame(2))
    macs[1].finish("delivered")
    macs[2].finish("delivered")
    assert macs[2].submitted == [0, 1]
    assert lre.deferrals == 0


def _drive(policy_kwargs, seed):
    """Random enqueue / finish / retry trace; returns both MACs' submissions."""
    lre, macs = _tx(**policy_kwargs)
    rng = np.random.default_rng(seed)
    next_id = 0
    for _ in range(200):
        action = rng.integers(0, 4)
        if action == 0:
            lre.tx_enqueue(_frame(next_id))
            next_id += 1
            continue
        mac = macs[int(rng.integers(1, 3))]
        if mac.ctx.current_frame is None:
            continue
        if action == 1:
            mac.retry(int(rng.integers(1, 7)))
        else:
            mac.finish("delivered" if action == 2 else "discarded")
    return macs[1].submitted, macs[2].submitted


@pytest.mark.parametrize("mode", ["rda-q", "rda-r"])
def test_zero_threshold_matches_plain_path(mode):
    for seed in range(200):
        with_flags = _drive({"mode": mode, "d_th": 0, "deferral_flags": True}, seed)
        plain = _drive({"mode": mode, "d_th": 0, "deferral_flags": False}, seed)
        assert with_flags == plain


# -------------------------------
# Receiver
# -------------------------------


def test_in_order_frames_are_delivered_at_once(engine):
    window = RxWindow(engine)
    assert [f.id for f in window.accept(_frame(0))] == [0]
    assert [f.id for f in window.accept(_frame(1))] == [1]
    assert window.next_expected == 2


def test_gap_holds_frames_until_filled(engine):
    window = RxWindow(engine)
    assert window.accept(_frame(1)) == []
    assert window.accept(_frame(2)) == []
    assert [f.id for f in window.accept(_frame(0))] == [0, 1, 2]
    assert engine.pending() == 0


def test_duplicates_are_discarded(engine):
    window = RxWindow(engine)
    window.accept(_frame(0))
    assert window.accept(_frame(0)) == []
    window.accept(_frame(2))
    assert window.accept(_frame(2)) == []
    assert window.duplicates == 2


def test_timeout_skips_missing_frames_and_late_copies_are_dropped(engine):
    skipped = []
    delivered = []
    window = RxWindow(
        engine, timeout_us=10_000,
        deliver=lambda frames: delivered.extend(f.id for f in frames),
        on_skip=skipped.extend,
    )
    window.accept(_frame(2))
    engine.run_until(9_999)
    assert delivered == []
    engine.run_until(10_000)
    assert delivered == [2]
    assert skipped == [0, 1]
    assert window.accept(_frame(1)) == []
    assert window.late == 1


def test_arrival_at_the_timeout_instant_is_not_skipped(engine):
    delivered = []
    window = RxWindow(engine, timeout_us=100, deliver=lambda fs: delivered.extend(f.id for f in fs))
    window.accept(_frame(1))
    # scheduled after the timer, same instant
    engine.schedule(100, "arrival", lambda: window.accept(_frame(0)))
    engine.run_until(200)
    assert delivered == [0, 1]
    assert window.skipped == set()


def test_unordered_policy_delivers_immediately_once(engine):
    window = RxWindow(engine, policy="unordered")
    assert [f.id for f in window.accept(_frame(3))] == [3]
    assert [f.id for f in window.accept(_frame(1))] == [1]
    assert window.accept(_frame(3)) == []
    assert window.duplicates == 1


def test_dedup_fuzz_delivers_every_received_frame_exactly_once():
    rng = np.random.default_rng(123)
    for case in range(10_000):
        engine = Engine()
        policy = "ordered" if case % 2 else "unordered"
        delivered = []
        window = RxWindow(engine, policy=policy, timeout_us=1_000,
                          deliver=lambda fs: delivered.extend(f.id for f in fs))
        n = int(rng.integers(1, 12))
        copies = [fid for fid in range(n) for _ in range(int(rng.integers(0, 3)))]
        rng.shuffle(copies)
        for fid in copies:
            window.accept(_frame(fid))
        engine.run_until(10_000)
        assert sorted(delivered) == sorted(set(copies))
        assert len(delivered) == len(set(delivered))
        assert window.duplicates == len(copies) - len(set(copies))


def test_reorder_window_matches_sorting_oracle():
    rng = np.random.default_rng(7)
    for _ in range(1_000):
        engine = Engine()
        delivered = []
        skipped = []
        window = RxWindow(engine, timeout_us=10_000,
                          deliver=lambda fs: delivered.extend(f.id for f in fs),
                          on_skip=skipped.extend)
        n = int(rng.integers(1, 30))
        received = [fid for fid in range(n) if rng.random() < 0.8]
        copies = received + [fid for fid in received if rng.random() < 0.3]
        times = sorted(int(t) for t in rng.integers(0, 5_000, size=len(copies)))
        order = list(rng.permutation(len(copies)))
        for t, index in zip(times, order):
            engine.schedule(t, "arrival", window.accept, _frame(copies[index]))
        engine.run_until(100_000)

        unique = sorted(set(received))
        assert delivered == unique
        top = unique[-1] if unique else -1
        assert skipped == [fid for fid in range(top + 1) if fid not in set(received)]
        assert window.late == 0


def test_receive_lre_keeps_one_window_per_destination(engine):
    lre = ReceiveLre(engine, "unordered", 10_000)
    a = Frame(id=0, payload_size=50, t_generated=0, destination=0)
    b = Frame(id=1, payload_size=50, t_generated=0, destination=1)
    assert lre.rx_accept(a, 1) == [a]
    assert lre.rx_accept(b, 2) == [b]
    assert lre.rx_accept(a, 2) == []
    assert sorted(lre.windows) == [0, 1]
    assert lre.duplicates == 1
