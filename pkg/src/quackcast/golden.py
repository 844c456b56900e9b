"""Canned scenarios with frozen expectations for regression checking.

The two timeline scenarios replay the canonical 4x4 walkthrough: one
sending cluster streaming eight messages (positions 0..7, i.e. m1..m8 in
1-based labels) to a receiving cluster that only acks.  Sends go out on odd
ticks, acks on even ticks, every hop takes one tick.  The look-ahead bitmap
is disabled (phi = 0) so the traces exercise the pure cumulative path.
"""

from __future__ import annotations

from .core import RsmConfig
from .simnet import CRASH_AT, AdversarySpec, Scenario

# -- failure-free timeline ---------------------------------------------------
# Position 0 is quorum-acked at sender 0 on tick 5 (acks from receivers 0 and
# 3); every sender covers positions 0..3 on tick 7 via the tick-6 full acks.
# Sender 2 additionally covers position 4 because receiver 1 acked 5 early.

TIMELINE_QUACKS: list[tuple[int, str, int]] = sorted(
    [(5, "s:0", 0)]
    + [(7, "s:0", p) for p in (1, 2, 3)]
    + [(7, "s:1", p) for p in (0, 1, 2, 3)]
    + [(7, "s:2", p) for p in (0, 1, 2, 3, 4)]
    + [(7, "s:3", p) for p in (0, 1, 2, 3)]
)

# Full-trace fingerprint; the literal trace ships in tests/golden/.
TIMELINE_TRACE_SHA256 = \
    "7ef282efbb6322ffa5a571439727d8c1172d373e5a67770684e53b34c511535c"

# -- crash scenario ----------------------------------------------------------
# Sender 0 crashes on tick 2, after its first send: position 4 (m5) is never
# sent.  Receivers repeat Ack(4); the second duplicate from a distinct
# replica lands on tick 15, electing sender 1 to resend position 4 to
# receiver 2 (original receiver 1, advanced by the retry count).

CRASH_POSITION = 4
CRASH_RESENDER = "s:1"
CRASH_RESEND_TICK = 15
CRASH_RESEND_RECEIVER = 2
CRASH_DUP_ACK_TICKS = [13, 15]
CRASH_FIRST_QUACK_TICK = 7

# -- apportionment table -----------------------------------------------------
# (shares, quantum, expected per-replica message counts)

APPORTIONMENT_ROWS: list[tuple[list[int], int, list[int]]] = [
    ([25, 25, 25, 25], 100, [25, 25, 25, 25]),
    ([250, 250, 250, 250], 100, [25, 25, 25, 25]),
    ([214, 262, 262, 262], 100, [22, 26, 26, 26]),
    ([97, 1, 1, 1], 10, [10, 0, 0, 0]),
]

# -- worst-case retransmission setups ----------------------------------------
# (n_s, n_r, u_s, u_r); the bound is u_s + u_r + 1, reached by the contiguous
# placement for at least one message.

LEMMA1_SETUPS: list[tuple[int, int, int, int]] = [(4, 4, 1, 1), (7, 7, 2, 2)]


def timeline_scenario() -> Scenario:
    return Scenario(
        rsm_s=RsmConfig.equal(0, 4, 1, 1),
        rsm_r=RsmConfig.equal(1, 4, 1, 1),
        messages=8,
        phi=0,
        tick_cap=100,
    )


def crash_m5_scenario(messages: int = 8) -> Scenario:
    return Scenario(
        rsm_s=RsmConfig.equal(0, 4, 1, 1),
        rsm_r=RsmConfig.equal(1, 4, 1, 1),
        messages=messages,
        phi=0,
        adversary={("s", 0): AdversarySpec(kind=CRASH_AT, at_tick=2)},
        tick_cap=200,
    )
