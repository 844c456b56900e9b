"""The full protocol node: glues scheduling, receiving and sending state.

Each node is single-owner and processes one event at a time; its outputs are
a pure function of (state, event), which is what makes simulator runs
reproducible byte-for-byte.  Wire messages are plain values:

    DATA  {position, k, cert, payload, ack}   cross-cluster send or resend
    ACK   {ack}                               standalone cumulative ack
    LOCAL {position, k, cert, payload, ack}   intra-cluster broadcast
    FETCH {fetch_positions}                   intra-cluster payload request
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import AckReport, CommittedMessage, ConfigError, RsmConfig, verify_certificate
from .receiver import ADVANCE, FETCH, AckBuffer, apply_gc_hint, hint_watermark
from .scheduler import (
    Quantum,
    assign_receiver,
    assign_sender,
    build_quantum,
    default_quantum_size,
    dss_pair,
    lcm_scale,
    retransmit_pair,
    weighted_retry_walk,
)
from .sender import DUP_JOIN, DUP_ROUND, QUACKED, PendingSend, QuackState, gc_collect, plan_resends

DATA = "DATA"
ACK = "ACK"
LOCAL = "LOCAL"
FETCH_REQ = "FETCH"


@dataclass(frozen=True)
class Wire:
    kind: str
    src_rsm: int
    src: int
    dst_rsm: int
    dst: int
    position: int | None = None
    k: int | None = None
    cert: object = None
    payload: bytes | None = None
    ack: AckReport | None = None
    fetch_positions: tuple[int, ...] = ()
    resend_no: int = 0


class PicsouNode:
    """One replica's protocol instance for a single peer cluster.

    The node is symmetric: it sends its cluster's committed stream to the
    peer cluster while receiving (and acking) the peer's stream.  All acks
    are piggybacked on data whenever the node has data of its own to send
    within the ack interval.
    """

    def __init__(self, my_id: int, local: RsmConfig, peer: RsmConfig, *,
                 phi: int = 8, window: int = 64, send_interval: int = 2,
                 ack_interval: int = 2, gc_hints: bool = True,
                 gc_mode: str = ADVANCE, quantum: int | None = None):
        self.my_id = my_id
        self.local = local
        self.peer = peer
        self.phi = phi
        self.window = window
        self.send_interval = send_interval
        self.ack_interval = ack_interval
        self.gc_hints = gc_hints
        self.gc_mode = gc_mode

        self.weighted = quantum is not None or not (local.equal_shares and peer.equal_shares)
        if self.weighted:
            q = quantum or default_quantum_size(local.node_count, peer.node_count)
            self.local_quantum: Quantum | None = build_quantum(local.shares, q)
            self.peer_quantum: Quantum | None = build_quantum(peer.shares, q)
            psi_s, psi_r = lcm_scale(local.total_share, peer.total_share)
            self.scaled_out_s = [s * psi_s for s in local.shares]
            self.scaled_out_r = [s * psi_r for s in peer.shares]
        else:
            self.local_quantum = None
            self.peer_quantum = None
        self._lap_cache: dict[tuple[int, int], list[tuple[int, int]]] = {}

        # outbound stream (sender role)
        self.stream: dict[int, CommittedMessage] = {}
        self.outbound_count = 0
        self.my_originals: list[int] = []
        self.next_original_idx = 0
        self.next_send_tick = 1
        self.quack = QuackState(peer.shares, peer.u, peer.r)
        self.pending: list[PendingSend] = []

        # inbound stream (receiver role)
        self.buf = AckBuffer(phi_cap=phi)
        self.local_quack = QuackState(local.shares, local.u, local.r)
        self.backup_pending: list[PendingSend] = []
        self.backup_armed: set[int] = set()
        self.inbound_store: dict[int, CommittedMessage] = {}
        self.hints_seen: dict[int, int] = {}
        self.fetch_requested: set[int] = set()

        # ack bookkeeping
        self.ack_count = 0
        self.last_ack_tick = 0
        self.received_since_ack = False

        self.events: list[tuple[str, int | None, str]] = []

    # ------------------------------------------------------------------ util

    def _event(self, kind: str, position: int | None = None, detail: str = "") -> None:
        self.events.append((kind, position, detail))

    def drain_events(self) -> list[tuple[str, int | None, str]]:
        out = self.events
        self.events = []
        return out

    def out_pair(self, seq: int) -> tuple[int, int]:
        """(sender, receiver) for position ``seq`` of the outbound stream."""
        if self.weighted:
            return dss_pair(seq, self.local_quantum, self.peer_quantum)
        return (assign_sender(seq, self.local.node_count),
                assign_receiver(seq, self.local.node_count, self.peer.node_count))

    def in_pair(self, seq: int) -> tuple[int, int]:
        """(sender, receiver) for position ``seq`` of the inbound stream."""
        if self.weighted:
            return dss_pair(seq, self.peer_quantum, self.local_quantum)
        return (assign_sender(seq, self.peer.node_count),
                assign_receiver(seq, self.peer.node_count, self.local.node_count))

    def _retry_lap(self, s0: int, r0: int) -> list[tuple[int, int]]:
        if (s0, r0) not in self._lap_cache:
            if self.weighted:
                lap = weighted_retry_walk(s0, r0, self.scaled_out_s, self.scaled_out_r)
            else:
                n_s, n_r = self.local.node_count, self.peer.node_count
                lap = [retransmit_pair(s0, r0, t, n_s, n_r)
                       for t in range(math.lcm(n_s, n_r))]
            self._lap_cache[(s0, r0)] = lap
        return self._lap_cache[(s0, r0)]

    def _my_retry_after(self, position: int, after: int) -> PendingSend | None:
        """My next retry slot for ``position`` with resend number > ``after``."""
        s0, r0 = self.out_pair(position)
        lap = self._retry_lap(s0, r0)
        mine = [i for i, (s, _) in enumerate(lap) if s == self.my_id]
        if not mine:
            return None
        period = len(lap)
        candidates = [(t if t > after else t + period * ((after - t) // period + 1))
                      for t in mine]
        nxt = min(candidates)
        return PendingSend(position, nxt, lap[nxt % period][1])

    # ------------------------------------------------------- outbound stream

    def transmit(self, msg: CommittedMessage) -> None:
        """Register a committed message for cross-cluster transmission.

        Messages with an absent stream number are not transmitted.  The node
        either owns the original send (paced by :meth:`on_tick`) or holds its
        first retry slot as a pending send.
        """
        if msg.k_prime is None:
            return
        if msg.cert is None or not verify_certificate(msg.cert, self.local):
            raise ConfigError("committed message lacks a valid local certificate")
        position = msg.k_prime
        self.stream[position] = msg
        self.outbound_count = max(self.outbound_count, position + 1)
        sender, _ = self.out_pair(position)
        if sender == self.my_id:
            self.my_originals.append(position)
        else:
            slot = self._my_retry_after(position, 0)
            if slot is not None:
                self.pending.append(slot)

    def current_ack(self) -> AckReport:
        hint = self.quack.gc_horizon if (self.gc_hints and self.quack.hint_active) else None
        return self.buf.make_ack(self.my_id, view=0, phi=self.phi,
                                 highest_quacked_hint=hint)

    def _ack_flushed(self, tick: int) -> None:
        self.received_since_ack = False
        self.last_ack_tick = tick

    def ack_owed(self) -> bool:
        return self.received_since_ack or self.buf.has_gap

    def needs_tick(self) -> bool:
        return self.next_original_idx < len(self.my_originals) or self.ack_owed()

    def _data_wire(self, position: int, dst: int, resend_no: int = 0) -> Wire:
        msg = self.stream[position]
        return Wire(DATA, self.local.rsm_id, self.my_id, self.peer.rsm_id, dst,
                    position=position, k=msg.k, cert=msg.cert, payload=msg.payload,
                    ack=self.current_ack(), resend_no=resend_no)

    def on_tick(self, tick: int) -> list[Wire]:
        wires: list[Wire] = []
        sent_data = False
        if self.next_original_idx < len(self.my_originals) and tick >= self.next_send_tick:
            position = self.my_originals[self.next_original_idx]
            if position - self.quack.quack_level <= self.window:
                _, receiver = self.out_pair(position)
                wires.append(self._data_wire(position, receiver))
                self._event("SEND", position, "to=%d" % receiver)
                self._ack_flushed(tick)
                self.next_original_idx += 1
                self.next_send_tick = tick + self.send_interval
                sent_data = True
                nxt = self._my_retry_after(position, 0)
                if nxt is not None:
                    self.pending.append(nxt)
        if not sent_data and self.ack_owed() and tick - self.last_ack_tick >= self.ack_interval:
            data_soon = (self.next_original_idx < len(self.my_originals)
                         and self.next_send_tick - tick < self.ack_interval)
            if not data_soon:
                dst = (self.my_id + self.ack_count) % self.peer.node_count
                self.ack_count += 1
                report = self.current_ack()
                wires.append(Wire(ACK, self.local.rsm_id, self.my_id,
                                  self.peer.rsm_id, dst, ack=report))
                self._event("ACK_SEND", report.cum_ack, "to=%d" % dst)
                self._ack_flushed(tick)
        return wires

    # -------------------------------------------------------- inbound wires

    def on_wire(self, wire: Wire, tick: int) -> list[Wire]:
        if wire.kind == DATA:
            return self._on_data(wire, tick)
        if wire.kind == ACK:
            return self._ingest_report(wire.ack, tick)
        if wire.kind == LOCAL:
            return self._on_local(wire, tick)
        if wire.kind == FETCH_REQ:
            return self._on_fetch(wire, tick)
        raise ConfigError("unknown wire kind %r" % wire.kind)

    def _local_broadcast(self, position: int, rebroadcast: bool = False) -> list[Wire]:
        msg = self.inbound_store[position]
        report = self.current_ack()
        wires = [Wire(LOCAL, self.local.rsm_id, self.my_id, self.local.rsm_id, j,
                      position=position, k=msg.k, cert=msg.cert,
                      payload=msg.payload, ack=report)
                 for j in range(self.local.node_count) if j != self.my_id]
        self._event("REBROADCAST" if rebroadcast else "BROADCAST", position, "")
        return wires

    def _arm_backup(self, position: int) -> None:
        # Duplicate foreign copies hint that the scheduled receiver may not
        # have spread the message; hold a backup rebroadcast slot.
        _, orig_receiver = self.in_pair(position)
        rb = (self.my_id - orig_receiver) % self.local.node_count
        if rb > 0 and position not in self.backup_armed and position in self.inbound_store:
            self.backup_armed.add(position)
            self.backup_pending.append(PendingSend(position, rb, self.my_id))

    def _on_data(self, wire: Wire, tick: int) -> list[Wire]:
        msg = CommittedMessage(wire.payload, wire.k, wire.position, wire.cert)
        if not verify_certificate(msg.cert, self.peer):
            self._event("INVALID_CERT", wire.position, "from=%d" % wire.src)
            return []
        wires: list[Wire] = []
        delivered, broadcast = self.buf.on_foreign_message(msg, self.peer)
        if delivered:
            self.inbound_store[msg.k_prime] = msg
            self.received_since_ack = True
            self._event("DELIVER", msg.k_prime, "foreign from=%d" % wire.src)
            if broadcast:
                wires.extend(self._local_broadcast(msg.k_prime))
        else:
            self._arm_backup(msg.k_prime)
        wires.extend(self._ingest_report(wire.ack, tick))
        return wires

    def _on_local(self, wire: Wire, tick: int) -> list[Wire]:
        msg = CommittedMessage(wire.payload, wire.k, wire.position, wire.cert)
        if not verify_certificate(msg.cert, self.peer):
            self._event("INVALID_CERT", wire.position, "local from=%d" % wire.src)
            return []
        wires: list[Wire] = []
        if self.buf.on_local_broadcast(msg, self.peer):
            self.inbound_store[msg.k_prime] = msg
            self.received_since_ack = True
            self._event("DELIVER", msg.k_prime, "local from=%d" % wire.src)
        if wire.ack is not None:
            self.local_quack.record_ack(wire.ack)
        for slot in plan_resends(self.local_quack, self.backup_pending):
            if slot.position in self.inbound_store:
                wires.extend(self._local_broadcast(slot.position, rebroadcast=True))
        return wires

    def _on_fetch(self, wire: Wire, tick: int) -> list[Wire]:
        wires: list[Wire] = []
        for position in wire.fetch_positions:
            if position in self.inbound_store:
                msg = self.inbound_store[position]
                wires.append(Wire(LOCAL, self.local.rsm_id, self.my_id,
                                  self.local.rsm_id, wire.src, position=position,
                                  k=msg.k, cert=msg.cert, payload=msg.payload,
                                  ack=self.current_ack()))
                self._event("FETCH_SERVE", position, "to=%d" % wire.src)
        return wires

    # ----------------------------------------------- sender-role ack intake

    def _ingest_report(self, report: AckReport | None, tick: int) -> list[Wire]:
        if report is None:
            return []
        wires: list[Wire] = []
        if report.highest_quacked_hint is not None and self.gc_hints:
            wires.extend(self._on_hint(report.from_replica,
                                       report.highest_quacked_hint, tick))
        prev = self.quack.highest_ack.get(report.from_replica)
        stuck = prev is not None and report.cum_ack == prev \
            and report.cum_ack < self.quack.quack_level
        for ev in self.quack.record_ack(report, max_position=self.outbound_count):
            if ev.kind == QUACKED:
                self._event("QUACK", ev.position, "prefix" if ev.prefix else "phi")
            elif ev.kind == DUP_JOIN:
                self._event("DUP_ACK", ev.position, "from=%d" % ev.count)
            elif ev.kind == DUP_ROUND:
                self._event("DUP_ROUND", ev.position, "count=%d" % ev.count)
        released = gc_collect(self.quack)
        if released:
            for position in released:
                self.stream.pop(position, None)
            self._event("GC", self.quack.gc_horizon, "released=%d" % len(released))
        if stuck and self.gc_hints and self.quack.hint_active:
            # Direct hint to a receiver repeating acks below our GC horizon.
            wires.append(Wire(ACK, self.local.rsm_id, self.my_id,
                              self.peer.rsm_id, report.from_replica,
                              ack=self.current_ack()))
            self._event("HINT_REPLY", report.cum_ack, "to=%d" % report.from_replica)
        for slot in plan_resends(self.quack, self.pending):
            if slot.position not in self.stream:
                continue   # released after quacking; no resend possible or needed
            wires.append(self._data_wire(slot.position, slot.receiver,
                                         resend_no=slot.resend_number))
            self._event("RESEND", slot.position,
                        "retry=%d to=%d" % (slot.resend_number, slot.receiver))
            nxt = self._my_retry_after(slot.position, slot.resend_number)
            if nxt is not None:
                self.pending.append(nxt)
        return wires

    def _on_hint(self, sender: int, hint: int, tick: int) -> list[Wire]:
        if self.gc_mode == ADVANCE:
            before = self.buf.cum
            if apply_gc_hint(self.buf, sender, hint, self.hints_seen,
                             self.peer.r, ADVANCE):
                self.received_since_ack = True
                self._event("HINT_ADVANCE", self.buf.cum, "from_cum=%d" % before)
            return []
        self.hints_seen[sender] = max(self.hints_seen.get(sender, 0), hint)
        target = hint_watermark(self.hints_seen, self.peer.r)
        missing = tuple(p for p in range(self.buf.cum, target)
                        if p not in self.buf.received and p not in self.fetch_requested)
        if not missing:
            return []
        self.fetch_requested.update(missing)
        self._event("FETCH_REQ", missing[0], "count=%d" % len(missing))
        return [Wire(FETCH_REQ, self.local.rsm_id, self.my_id,
                     self.local.rsm_id, j, fetch_positions=missing)
                for j in range(self.local.node_count) if j != self.my_id]
