"""Sender-side state: quorum-ack tracking, duplicate rounds, resend planning.

A :class:`QuackState` digests the acks coming back from the receiving
cluster.  A position is quorum-acked ("quacked") once receivers totalling
u+1 share vouch for it, proving at least one correct receiver holds it.
Repeated acks from r+1 distinct receivers at an already-stable base signal
that the next position is genuinely lost or delayed; each such completed
duplicate round advances a counter that elects exactly one retransmitter.

The same class doubles as the intra-cluster tracker for local broadcast
acks (the backup-rebroadcast path), with the local cluster's thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import AckReport


QUACKED = "QUACKED"
DUP_JOIN = "DUP_JOIN"
DUP_ROUND = "DUP_ROUND"


@dataclass(frozen=True)
class QuackEvent:
    kind: str
    position: int
    count: int = 0
    prefix: bool = True   # QUACKED: via contiguous prefix (False = phi claim)


@dataclass
class PendingSend:
    """A retry slot this replica owns: resend ``position`` on round ``resend_number``."""

    position: int
    resend_number: int
    receiver: int

    def __post_init__(self) -> None:
        if self.resend_number < 1:
            raise ValueError("resend_number must be >= 1 for retransmissions")


class QuackState:
    def __init__(self, receiver_shares: tuple[int, ...] | list[int],
                 u: int, r: int, view: int = 0):
        self.shares = tuple(receiver_shares)
        self.view = view
        self.quack_threshold = u + 1     # share units
        self.dup_threshold = r + 1       # share units
        self.highest_ack: dict[int, int] = {}
        self.phi_claims: dict[int, set[int]] = {}
        self.dup_count: dict[int, int] = {}
        self.dup_members: dict[int, set[int]] = {}
        self.quack_level = 0
        self.quacked_extra: set[int] = set()
        self.gc_horizon = 0
        self.hint_active = False

    def is_quacked(self, position: int) -> bool:
        return position < self.quack_level or position in self.quacked_extra

    def _cover_share(self, position: int) -> int:
        covered: set[int] = {
            rid for rid, ack in self.highest_ack.items() if ack > position
        }
        covered |= self.phi_claims.get(position, set())
        return sum(self.shares[rid] for rid in covered)

    def record_ack(self, report: AckReport, max_position: int | None = None) -> list[QuackEvent]:
        """Fold one receiver report into the state; returns quack/dup events.

        ``max_position`` bounds attention to positions that actually exist in
        the outbound stream, so fabricated ack values cannot inflate state.
        """
        rid = report.from_replica
        if rid < 0 or rid >= len(self.shares) or report.view != self.view:
            return []
        events: list[QuackEvent] = []
        prev = self.highest_ack.get(rid)

        def in_range(p: int) -> bool:
            return max_position is None or p < max_position

        for j, bit in enumerate(report.phi_list):
            if bit:
                p = report.cum_ack + j
                if in_range(p):
                    self.phi_claims.setdefault(p, set()).add(rid)

        # A repeated cumulative value at a stable base is a complaint that the
        # explicitly-missing positions were never received.
        if prev is not None and report.cum_ack == prev and self.quack_level >= report.cum_ack:
            for p in report.missing_positions():
                if not in_range(p):
                    continue
                members = self.dup_members.setdefault(p, set())
                if rid not in members:
                    events.append(QuackEvent(DUP_JOIN, p, rid))
                members.add(rid)
                if sum(self.shares[m] for m in members) >= self.dup_threshold:
                    self.dup_count[p] = self.dup_count.get(p, 0) + 1
                    self.dup_members[p] = set()
                    if self.is_quacked(p):
                        # Complaints below the quack level mean some receiver
                        # is stuck behind garbage-collected state.
                        self.hint_active = True
                    events.append(QuackEvent(DUP_ROUND, p, self.dup_count[p]))

        if prev is None or report.cum_ack > prev:
            self.highest_ack[rid] = report.cum_ack

        advanced = False
        while in_range(self.quack_level) and self._cover_share(self.quack_level) >= self.quack_threshold:
            p = self.quack_level
            self.quack_level += 1
            self.quacked_extra.discard(p)
            events.append(QuackEvent(QUACKED, p))
            advanced = True
        if advanced:
            self.phi_claims = {p: v for p, v in self.phi_claims.items()
                               if p >= self.quack_level}
        for p in sorted(self.phi_claims):
            if p >= self.quack_level and p not in self.quacked_extra \
                    and self._cover_share(p) >= self.quack_threshold:
                self.quacked_extra.add(p)
                events.append(QuackEvent(QUACKED, p, prefix=False))
        return events


def plan_resends(st: QuackState, pending: list[PendingSend]) -> list[PendingSend]:
    """Pick the retry slots due now; drops slots whose position is quacked.

    A slot fires when the duplicate-round count for its position has reached
    its resend number, so across all sender replicas exactly one emits each
    (position, retry) pair.  Fired and quacked slots leave ``pending``.
    """
    due: list[PendingSend] = []
    keep: list[PendingSend] = []
    for slot in pending:
        if st.is_quacked(slot.position):
            continue
        if st.dup_count.get(slot.position, 0) >= slot.resend_number:
            due.append(slot)
        else:
            keep.append(slot)
    pending[:] = keep
    return due


def gc_collect(st: QuackState) -> list[int]:
    """Positions newly releasable (everything below the quack level)."""
    if st.quack_level <= st.gc_horizon:
        return []
    released = list(range(st.gc_horizon, st.quack_level))
    st.gc_horizon = st.quack_level
    return released
