"""Receiver-side state: the contiguity buffer, ack construction, GC hints.

One :class:`AckBuffer` belongs to exactly one node and tracks the inbound
cross-cluster stream.  Certificate-checked insertion guarantees integrity:
nothing enters the delivered log without a verifying quorum certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .core import AckReport, CommittedMessage, RsmConfig, verify_certificate

ADVANCE = "ADVANCE"
FETCH = "FETCH"


@dataclass
class AckBuffer:
    """Sorted receive buffer with a monotone contiguous-prefix counter."""

    phi_cap: int = 8
    received: set[int] = field(default_factory=set)
    cum: int = 0
    max_seen: int = -1
    delivered_log: list[tuple[int, CommittedMessage]] = field(default_factory=list)
    _delivered: set[int] = field(default_factory=set)

    def _insert(self, position: int) -> None:
        self.received.add(position)
        if position > self.max_seen:
            self.max_seen = position
        while self.cum in self.received:
            self.cum += 1

    def _deliver(self, position: int, msg: CommittedMessage) -> bool:
        if position in self._delivered:
            return False
        self._delivered.add(position)
        self.delivered_log.append((position, msg))
        return True

    @property
    def has_gap(self) -> bool:
        """True while some received position lies beyond the contiguous prefix."""
        return self.max_seen >= self.cum

    def on_foreign_message(self, msg: CommittedMessage, sender_rsm: RsmConfig,
                           rebroadcast_number: int = 0) -> tuple[bool, bool]:
        """Handle a cross-cluster arrival; returns (delivered, broadcast_now).

        Invalid certificates are a defined no-op.  A fresh valid message is
        delivered exactly once and rebroadcast iff this replica's rebroadcast
        number for it is 0 (the node receiving the targeted wire).
        """
        if msg.k_prime is None or not verify_certificate(msg.cert, sender_rsm):
            return False, False
        position = msg.k_prime
        if position in self.received:
            return False, False
        self._insert(position)
        delivered = self._deliver(position, msg)
        return delivered, delivered and rebroadcast_number == 0

    def on_local_broadcast(self, msg: CommittedMessage, sender_rsm: RsmConfig) -> bool:
        """Same insertion semantics as the foreign path, without the rebroadcast."""
        if msg.k_prime is None or not verify_certificate(msg.cert, sender_rsm):
            return False
        position = msg.k_prime
        if position in self.received:
            return False
        self._insert(position)
        return self._deliver(position, msg)

    def mark_received(self, position: int) -> None:
        """Record a position as received without a payload (GC-hint advance)."""
        if position not in self.received:
            self._insert(position)

    def make_ack(self, from_replica: int, view: int = 0,
                 phi: int | None = None,
                 highest_quacked_hint: int | None = None) -> AckReport:
        """Snapshot the buffer into a cumulative ack plus look-ahead bitmap."""
        cap = self.phi_cap if phi is None else phi
        bits = [1 if (self.cum + j) in self.received else 0 for j in range(cap)]
        while bits and bits[-1] == 0:
            bits.pop()
        return AckReport(from_replica, view, self.cum, tuple(bits), highest_quacked_hint)


def hint_watermark(hints_seen: dict[int, int], r_s: int) -> int:
    """Largest value hinted by at least r_s+1 distinct sender replicas (0 if none)."""
    if len(hints_seen) <= r_s:
        return 0
    ranked = sorted(hints_seen.values(), reverse=True)
    return ranked[r_s]


def apply_gc_hint(buf: AckBuffer, sender: int, hint: int,
                  hints_seen: dict[int, int], r_s: int, mode: str = ADVANCE,
                  fetch: Callable[[int], CommittedMessage | None] | None = None,
                  sender_rsm: RsmConfig | None = None) -> bool:
    """Fold one highest-quacked hint into the buffer; returns whether cum moved.

    A hint only takes effect once r_s+1 distinct sender replicas vouch for
    (at least) the same value, which guarantees a correct sender saw every
    position below it quorum-acked.  ADVANCE marks the gap positions received
    without payloads; FETCH pulls the payloads from local peers first.
    """
    hints_seen[sender] = max(hints_seen.get(sender, 0), hint)
    target = hint_watermark(hints_seen, r_s)
    if target <= buf.cum:
        return False
    before = buf.cum
    missing = [p for p in range(buf.cum, target) if p not in buf.received]
    if mode == FETCH:
        if fetch is None:
            raise ValueError("FETCH mode requires a local fetch callback")
        for position in missing:
            msg = fetch(position)
            if msg is not None and sender_rsm is not None:
                buf.on_local_broadcast(msg, sender_rsm)
            elif msg is not None:
                buf._insert(position)
                buf._deliver(position, msg)
    else:
        for position in missing:
            buf.mark_received(position)
    return buf.cum > before
