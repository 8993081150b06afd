from typing import Dict, Literal, Optional, TypedDict

# -------------------------------
# Scenario-level definitions
# -------------------------------

Direction = Literal["uplink", "downlink"]

TrafficLaw = Literal["cyclic", "exponential"]

EnvironmentName = Literal["benign", "hostile"]

# "dcf" is the simplex legacy link; the other three are duplex Wi-Red variants
Scheme = Literal["dcf", "basic", "rda-q", "rda-r"]

RxPolicy = Literal["ordered", "unordered"]


# -------------------------------
# Frame / MAC / channel states
# -------------------------------

ChannelStatus = Literal["waiting", "in_mac", "delivered", "discarded", "removed"]

FrameFlag = Literal["ready", "deferrable", "undeferrable"]

MacState = Literal["idle", "deferring", "backoff", "transmitting", "awaiting_ack"]

# always: post-backoff after every outcome; backlogged: only before a back-to-back frame
PostBackoff = Literal["always", "backlogged"]

MacOutcome = Literal["delivered", "retrying", "discarded", "aborted"]

Verdict = Literal["ok", "collided", "bit_errors"]

GeState = Literal["good", "bad"]

Outcome = Literal["delivered", "lost_overrun", "lost_retry_limit", "lost_reorder_skip"]


# -------------------------------
# Per-packet and per-run records
# -------------------------------


class PacketRecord(TypedDict):
    """
    Life of one application packet, from the instant the DL-user queues it on
    the sender to the instant it is relayed to the DL-user on the receiver.

    All instants are virtual-time microseconds. Latency components:
      d_Q = first air start - generation
      d_T = first correct reception at the peer MAC - first air start
      d_R = delivery to the user - first correct reception
    """

    id: int
    t_generated: int

    # channel -> start of the first air attempt of that copy
    t_first_tx_start: Dict[int, int]

    t_delivered_to_mac_peer: Optional[int]
    t_delivered_to_user: Optional[int]

    outcome: Optional[Outcome]


class RunReport(TypedDict):
    """
    Aggregated statistics of one simulation run (steady state only: packets
    generated during the warm-up window are left out).

    Latencies are microseconds; ratios are fractions in [0, 1]. Percentiles
    and the latency moments are None when no packet was delivered.
    """

    # Latency statistics over delivered packets
    d_mean: Optional[float]
    d_std: Optional[float]
    d_min: Optional[int]
    d_p95: Optional[int]
    d_p99: Optional[int]
    d_p99_5: Optional[int]
    d_p99_9: Optional[int]
    d_max: Optional[int]

    # Mean latency components
    dq_mean: Optional[float]
    dt_mean: Optional[float]
    dr_mean: Optional[float]

    # Deadline-miss and loss ratios (lost packets exceed every threshold)
    p_d_gt_dmin: float
    p_d_gt_1ms: float
    p_d_gt_10ms: float
    p_d_gt_100ms: float
    p_lost: float

    # Time-weighted mean Q^tx occupancy per channel, and their average
    q_mean_1: Optional[float]
    q_mean_2: Optional[float]
    q_mean: Optional[float]

    # Packet accounting
    generated: int
    delivered: int
    lost_overrun: int
    lost_retry_limit: int
    lost_reorder_skip: int
    in_flight: int

    # Redundancy bookkeeping
    duplicates_discarded: int
    late_discarded: int
    aborts: int
    scrubs: int
    deferrals: int
    air_attempts_1: int
    air_attempts_2: int
    stray_acks: int


class ReportRow(RunReport):
    """
    One CSV line: the scenario labels plus every RunReport field.
    The column set is versioned by `schema_version`.
    """

    direction: str
    traffic: str
    environment: str
    scheme: str
    d_th: int
    rx_policy: str
    seed: int
    schema_version: int
    effective_config: str
