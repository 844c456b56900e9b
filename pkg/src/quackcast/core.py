"""Core domain types: cluster configs, certificates, messages, acks, metrics.

Sequence numbering convention used throughout the package: stream positions
are 0-based, and a cumulative acknowledgment value ``p`` is a *count* -- it
means positions ``0 .. p-1`` have all been received.  Conventional protocol
walkthroughs label messages 1-based (m1, m2, ...); m(k) is position k-1 here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Raised when a cluster or scenario configuration is invalid."""


@dataclass(frozen=True)
class RsmConfig:
    """Membership, share vector and fault budgets of one replicated cluster.

    ``u`` is the liveness budget (tolerated failures of any kind) and ``r``
    the commission budget (tolerated Byzantine failures), both expressed in
    share units.  A valid cluster holds total share >= 2u + r + 1; with equal
    shares and u == r == f this is the classic 3f+1 sizing, and r == 0 gives
    the crash-only 2f+1 sizing.
    """

    rsm_id: int
    node_count: int
    shares: tuple[int, ...]
    u: int
    r: int
    id_seed: int = 0

    def __post_init__(self) -> None:
        if self.node_count <= 0:
            raise ConfigError("node_count must be positive")
        if len(self.shares) != self.node_count:
            raise ConfigError("shares must have one entry per replica")
        if any(s < 1 for s in self.shares):
            raise ConfigError("all shares must be >= 1")
        if self.u < 0 or self.r < 0:
            raise ConfigError("fault budgets must be non-negative")
        if self.r > self.u:
            raise ConfigError("commission budget r must not exceed u")
        if self.total_share < 2 * self.u + self.r + 1:
            raise ConfigError(
                "total share %d below 2u+r+1 = %d"
                % (self.total_share, 2 * self.u + self.r + 1)
            )

    @property
    def total_share(self) -> int:
        return sum(self.shares)

    @property
    def equal_shares(self) -> bool:
        return len(set(self.shares)) == 1

    def share_of(self, replica: int) -> int:
        return self.shares[replica]

    @classmethod
    def equal(cls, rsm_id: int, n: int, u: int, r: int, id_seed: int = 0) -> "RsmConfig":
        return cls(rsm_id, n, (1,) * n, u, r, id_seed)


@dataclass(frozen=True)
class Certificate:
    """Simulated commit certificate: a signer set plus a share threshold.

    No real signatures; validity is purely the quorum predicate, which is all
    the protocol's guarantees rely on.
    """

    rsm_id: int
    commit_seq: int
    signer_shares: frozenset[tuple[int, int]]
    threshold: int


def verify_certificate(cert: Certificate, expected_rsm: RsmConfig) -> bool:
    """True iff the certificate is a valid quorum commit for ``expected_rsm``.

    Checks: matching cluster id, every signer a member with its genuine share
    weight, no signer counted twice, and total signer share >= threshold.
    """
    if cert.rsm_id != expected_rsm.rsm_id:
        return False
    if cert.threshold <= 0:
        return False
    seen: set[int] = set()
    total = 0
    for idx, weight in cert.signer_shares:
        if idx < 0 or idx >= expected_rsm.node_count:
            return False
        if idx in seen:
            return False
        if weight != expected_rsm.shares[idx]:
            return False
        seen.add(idx)
        total += weight
    return total >= cert.threshold


def make_certificate(config: RsmConfig, commit_seq: int,
                     signers: list[int] | None = None,
                     threshold: int | None = None) -> Certificate:
    """Build a well-formed certificate; default signers = full membership."""
    if signers is None:
        signers = list(range(config.node_count))
    if threshold is None:
        threshold = config.u + config.r + 1
    return Certificate(
        rsm_id=config.rsm_id,
        commit_seq=commit_seq,
        signer_shares=frozenset((i, config.shares[i]) for i in signers),
        threshold=threshold,
    )


@dataclass(frozen=True)
class CommittedMessage:
    """A committed request, carrying its commit seq ``k`` and stream seq ``k_prime``.

    ``k_prime`` is the 0-based position in the cross-cluster stream; ``None``
    means the message is committed locally but must not be transmitted.
    """

    payload: bytes
    k: int
    k_prime: int | None
    cert: Certificate


ACK_HEADER = struct.Struct("<IIQ")   # from_replica, view, cum_ack
ACK_HEADER_BYTES = ACK_HEADER.size   # 16


@dataclass(frozen=True)
class AckReport:
    """A receiver's cumulative acknowledgment plus a short look-ahead bitmap.

    ``cum_ack`` counts the contiguous prefix received (p means 0..p-1 held).
    ``phi_list[j]`` is 1 iff position ``cum_ack + j`` has been received; the
    first bit is always 0 (otherwise cum_ack would be larger) and trailing
    zero bits are truncated.  ``highest_quacked_hint`` is garbage-collection
    metadata carried at the wire level; it is not part of the serialized form.
    """

    from_replica: int
    view: int
    cum_ack: int
    phi_list: tuple[int, ...] = ()
    highest_quacked_hint: int | None = None

    def covers(self, position: int) -> bool:
        """Whether this report claims ``position`` was received."""
        if position < self.cum_ack:
            return True
        j = position - self.cum_ack
        return j < len(self.phi_list) and self.phi_list[j] == 1

    def missing_positions(self) -> list[int]:
        """Positions this report explicitly claims NOT to have received."""
        if not self.phi_list:
            return [self.cum_ack]
        return [self.cum_ack + j for j, bit in enumerate(self.phi_list) if bit == 0]

    def serialize(self) -> bytes:
        """16-byte fixed header followed by the packed look-ahead bitmap."""
        head = ACK_HEADER.pack(self.from_replica, self.view, self.cum_ack)
        nbytes = (len(self.phi_list) + 7) // 8
        bits = bytearray(nbytes)
        for j, bit in enumerate(self.phi_list):
            if bit:
                bits[j // 8] |= 1 << (j % 8)
        return head + bytes(bits)


def parse_ack(data: bytes) -> AckReport:
    """Inverse of :meth:`AckReport.serialize` (bitmap restored sans trailing zeros)."""
    from_replica, view, cum_ack = ACK_HEADER.unpack_from(data)
    bits: list[int] = []
    for byte in data[ACK_HEADER_BYTES:]:
        for j in range(8):
            bits.append((byte >> j) & 1)
    while bits and bits[-1] == 0:
        bits.pop()
    return AckReport(from_replica, view, cum_ack, tuple(bits))


@dataclass
class MessageMetrics:
    """Accounting for one stream position across a run."""

    position: int
    cross_copies: int = 0
    attempts: int = 0
    first_delivery_tick: int | None = None
    quack_tick: int | None = None


@dataclass
class MetricRecord:
    """Per-protocol totals plus one :class:`MessageMetrics` row per position."""

    protocol: str
    per_message: dict[int, MessageMetrics] = field(default_factory=dict)
    invalid_ignored: int = 0
    standalone_acks: int = 0
    max_ack_bytes: int = 0
    resend_count: int = 0
    delivered_all: bool = False
    stream_complete: bool = False
    liveness_timeout: bool = False

    def message(self, position: int) -> MessageMetrics:
        if position not in self.per_message:
            self.per_message[position] = MessageMetrics(position)
        return self.per_message[position]

    @property
    def total_cross_copies(self) -> int:
        return sum(m.cross_copies for m in self.per_message.values())

    @property
    def total_attempts(self) -> int:
        return sum(m.attempts for m in self.per_message.values())

    def copies_per_message(self) -> float:
        if not self.per_message:
            return 0.0
        return self.total_cross_copies / len(self.per_message)

    def to_csv(self) -> str:
        lines = ["position,cross_copies,attempts,first_delivery_tick,quack_tick"]
        for pos in sorted(self.per_message):
            m = self.per_message[pos]
            lines.append(
                "%d,%d,%d,%s,%s"
                % (
                    pos,
                    m.cross_copies,
                    m.attempts,
                    "" if m.first_delivery_tick is None else m.first_delivery_tick,
                    "" if m.quack_tick is None else m.quack_tick,
                )
            )
        lines.append(
            "totals,%d,%d,protocol=%s,delivered_all=%s"
            % (self.total_cross_copies, self.total_attempts, self.protocol, self.delivered_all)
        )
        return "\n".join(lines) + "\n"
