"""Deterministic discrete-event simulator for two communicating clusters.

Virtual time advances in integer ticks.  Events are processed from a priority
queue keyed by (tick, class, insertion order): wire deliveries first, then a
per-tick pump that lets every node emit paced sends and owed acks.  Anything
a node emits during tick t arrives at t + latency.  A run terminates at
quiescence (empty queue) or at the tick cap, which is reported as a liveness
timeout rather than an error.

Adversarial replicas are modelled by wrapping a node's inputs and outputs;
correct replicas never deviate.  Baseline protocols (one-shot, all-to-all,
leader-to-leader, one-to-u+1) are modelled at message granularity, enough to
compare cross-cluster copy counts and delivery guarantees.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field

from .core import (
    Certificate,
    CommittedMessage,
    ConfigError,
    MetricRecord,
    RsmConfig,
    make_certificate,
)
from .node import ACK, DATA, LOCAL, PicsouNode, Wire
from .receiver import ADVANCE, FETCH
from .scheduler import assign_ids, assign_receiver, assign_sender

PICSOU = "PICSOU"
OST = "OST"
ATA = "ATA"
LL = "LL"
OTU = "OTU"
PROTOCOLS = (PICSOU, OST, ATA, LL, OTU)

CORRECT = "correct"
CRASH_AT = "crash_at"
OMIT_FOREIGN = "omit_foreign"
OMIT_BROADCAST = "omit_broadcast"
LIE_ACK = "lie_ack"
FORGE_CERT = "forge_cert"
STALL_BYZANTINE = "stall_byzantine"

LIE_INF = "INF"
LIE_ZERO = "ZERO"
LIE_DELAY_PHI = "DELAY_PHI"

_COMMISSION_KINDS = {LIE_ACK, FORGE_CERT, STALL_BYZANTINE}


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    event: str
    node: str
    rsm: int
    position: int | None
    detail: str

    def line(self) -> str:
        pos = "" if self.position is None else str(self.position)
        return "%d,%s,%s,%d,%s,%s" % (self.tick, self.event, self.node,
                                      self.rsm, pos, self.detail)


@dataclass
class Trace:
    events: list[TraceEvent] = field(default_factory=list)
    liveness_timeout: bool = False

    def add(self, tick: int, event: str, node: str, rsm: int,
            position: int | None, detail: str = "") -> None:
        self.events.append(TraceEvent(tick, event, node, rsm, position, detail))

    def lines(self) -> list[str]:
        return [e.line() for e in self.events]

    def sha256(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def select(self, event: str, node: str | None = None) -> list[TraceEvent]:
        return [e for e in self.events
                if e.event == event and (node is None or e.node == node)]


@dataclass(frozen=True)
class AdversarySpec:
    """Per-replica behavior; everything but ``correct`` consumes fault budget."""

    kind: str = CORRECT
    at_tick: int = 0                     # crash_at: inert from this tick on
    mode: str = ""                       # lie_ack: INF | ZERO | DELAY_PHI
    positions: tuple[int, ...] = ()      # omit_foreign: drop these (empty = all)
    target: int = -1                     # stall_byzantine: stalled position
    share_with: tuple[int, ...] = ()     # stall_byzantine: broadcast recipients

    @property
    def commission(self) -> bool:
        return self.kind in _COMMISSION_KINDS


@dataclass
class Scenario:
    rsm_s: RsmConfig
    rsm_r: RsmConfig
    protocol: str = PICSOU
    messages: int = 8
    reverse_messages: int = 0
    phi: int = 8
    window: int = 64
    quantum: int | None = None
    send_interval: int = 2
    ack_interval: int = 2
    latency: int = 1
    adversary: dict[tuple[str, int], AdversarySpec] = field(default_factory=dict)
    drops: set[tuple[int, str, int, str, int]] = field(default_factory=set)
    seed: int = 0
    tick_cap: int = 10_000
    gc_hints: bool = True
    gc_mode: str = ADVANCE
    randomize_ids: bool = False
    strict_budget: bool = True
    payload_size: int = 8

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError("protocol must be one of %s" % (PROTOCOLS,))
        if self.messages < 0:
            raise ConfigError("messages must be non-negative")
        if self.rsm_s.rsm_id == self.rsm_r.rsm_id:
            raise ConfigError("rsm_s and rsm_r need distinct rsm_id values")
        if self.gc_mode not in (ADVANCE, FETCH):
            raise ConfigError("gc_mode must be ADVANCE or FETCH")
        for (side, idx), spec in self.adversary.items():
            if side not in ("s", "r"):
                raise ConfigError("adversary: side must be 's' or 'r'")
            cfg = self.rsm_s if side == "s" else self.rsm_r
            if not 0 <= idx < cfg.node_count:
                raise ConfigError("adversary: replica %d out of range" % idx)
        if self.strict_budget:
            for side, cfg in (("s", self.rsm_s), ("r", self.rsm_r)):
                faulty = sum(cfg.shares[i] for (sd, i), sp in self.adversary.items()
                             if sd == side and sp.kind != CORRECT)
                commission = sum(cfg.shares[i] for (sd, i), sp in self.adversary.items()
                                 if sd == side and sp.commission)
                if faulty > cfg.u:
                    raise ConfigError("adversary: faulty share %d exceeds u=%d on side %s"
                                      % (faulty, cfg.u, side))
                if commission > cfg.r:
                    raise ConfigError("adversary: commission share %d exceeds r=%d on side %s"
                                      % (commission, cfg.r, side))


class _Behavior:
    """Stateful adversary wrapper applied to one replica's inputs/outputs."""

    def __init__(self, spec: AdversarySpec, scenario: Scenario, side: str, node_id: int):
        self.spec = spec
        self.sc = scenario
        self.side = side
        self.node_id = node_id
        self.blasted = False
        self.forge_counter = 0

    def alive(self, tick: int) -> bool:
        if self.spec.kind == CRASH_AT:
            return tick < self.spec.at_tick
        return True

    def _lie(self, ack):
        if ack is None:
            return None
        big = self.sc.messages + self.sc.reverse_messages + 1000
        if self.spec.mode == LIE_INF:
            return ack.__class__(ack.from_replica, ack.view, big, ())
        if self.spec.mode == LIE_ZERO:
            return ack.__class__(ack.from_replica, ack.view, 0, ())
        if self.spec.mode == LIE_DELAY_PHI:
            return ack.__class__(ack.from_replica, ack.view,
                                 max(0, ack.cum_ack - self.sc.phi), ())
        return ack

    def _forged_wire(self, node: PicsouNode, tick: int) -> Wire:
        # Certificate signed by this replica alone: below any valid threshold.
        self.forge_counter += 1
        position = self.sc.messages + self.forge_counter
        bogus = Certificate(
            rsm_id=node.local.rsm_id if self.forge_counter % 2 else node.local.rsm_id + 77,
            commit_seq=position,
            signer_shares=frozenset({(self.node_id, node.local.shares[self.node_id])}),
            threshold=node.local.u + node.local.r + 1,
        )
        dst = self.forge_counter % node.peer.node_count
        return Wire(DATA, node.local.rsm_id, self.node_id, node.peer.rsm_id, dst,
                    position=position, k=position, cert=bogus,
                    payload=b"forged", ack=node.current_ack())

    def transform(self, wire: Wire, node: PicsouNode, tick: int) -> list[Wire]:
        kind = self.spec.kind
        if kind in (CORRECT, CRASH_AT):
            return [wire]
        if kind == OMIT_FOREIGN:
            if wire.kind == DATA and (not self.spec.positions
                                      or wire.position in self.spec.positions):
                return []
            return [wire]
        if kind == OMIT_BROADCAST:
            return [] if wire.kind == LOCAL else [wire]
        if kind == LIE_ACK:
            if wire.ack is not None:
                return [Wire(wire.kind, wire.src_rsm, wire.src, wire.dst_rsm, wire.dst,
                             position=wire.position, k=wire.k, cert=wire.cert,
                             payload=wire.payload, ack=self._lie(wire.ack),
                             fetch_positions=wire.fetch_positions,
                             resend_no=wire.resend_no)]
            return [wire]
        if kind == FORGE_CERT:
            out = [wire]
            if wire.kind == DATA and wire.resend_no == 0:
                out.append(self._forged_wire(node, tick))
            return out
        if kind == STALL_BYZANTINE:
            if wire.kind == LOCAL and wire.position == self.spec.target:
                return [wire] if wire.dst in self.spec.share_with else []
            if wire.kind == ACK:
                if self.blasted:
                    return []
                if wire.ack is not None and wire.ack.cum_ack > self.spec.target:
                    self.blasted = True
                    return [Wire(ACK, wire.src_rsm, wire.src, wire.dst_rsm, dst,
                                 ack=wire.ack)
                            for dst in range(node.peer.node_count)]
            return [wire]
        raise ConfigError("unknown adversary kind %r" % kind)


def _build_stream(cfg: RsmConfig, count: int, rng: random.Random,
                  payload_size: int) -> list[CommittedMessage]:
    return [CommittedMessage(payload=rng.randbytes(payload_size), k=i, k_prime=i,
                             cert=make_certificate(cfg, i))
            for i in range(count)]


class _Sim:
    def __init__(self, sc: Scenario):
        sc.validate()
        self.sc = sc
        self.trace = Trace()
        self.metrics = MetricRecord(protocol=sc.protocol)
        self.correct_deliveries: dict[int, set[int]] = {}

        perm_s = assign_ids(sc.rsm_s) if sc.randomize_ids else None
        perm_r = assign_ids(sc.rsm_r) if sc.randomize_ids else None

        def behavior_for(side: str, logical: int) -> _Behavior:
            perm = perm_s if side == "s" else perm_r
            physical = perm.to_physical[logical] if perm else logical
            spec = sc.adversary.get((side, physical), AdversarySpec())
            return _Behavior(spec, sc, side, logical)

        knobs = dict(phi=sc.phi, window=sc.window, send_interval=sc.send_interval,
                     ack_interval=sc.ack_interval, gc_hints=sc.gc_hints,
                     gc_mode=sc.gc_mode, quantum=sc.quantum)
        self.nodes: dict[tuple[str, int], PicsouNode] = {}
        self.behaviors: dict[tuple[str, int], _Behavior] = {}
        for i in range(sc.rsm_s.node_count):
            self.nodes[("s", i)] = PicsouNode(i, sc.rsm_s, sc.rsm_r, **knobs)
            self.behaviors[("s", i)] = behavior_for("s", i)
        for j in range(sc.rsm_r.node_count):
            self.nodes[("r", j)] = PicsouNode(j, sc.rsm_r, sc.rsm_s, **knobs)
            self.behaviors[("r", j)] = behavior_for("r", j)
        self.node_order = [("s", i) for i in range(sc.rsm_s.node_count)] + \
                          [("r", j) for j in range(sc.rsm_r.node_count)]

        for position in range(sc.messages):
            self.metrics.message(position)

        rng = random.Random(sc.seed)
        forward = _build_stream(sc.rsm_s, sc.messages, rng, sc.payload_size)
        reverse = _build_stream(sc.rsm_r, sc.reverse_messages, rng, sc.payload_size)
        for i in range(sc.rsm_s.node_count):
            for msg in forward:
                self.nodes[("s", i)].transmit(msg)
        for j in range(sc.rsm_r.node_count):
            for msg in reverse:
                self.nodes[("r", j)].transmit(msg)

        self.heap: list[tuple[int, int, int, Wire | None]] = []
        self.seq = 0
        self.in_flight = 0

    def _side_of(self, rsm_id: int) -> str:
        return "s" if rsm_id == self.sc.rsm_s.rsm_id else "r"

    def _push_wire(self, wire: Wire, tick: int) -> None:
        heapq.heappush(self.heap, (tick + self.sc.latency, 0, self.seq, wire))
        self.seq += 1
        self.in_flight += 1

    def _push_tick(self, tick: int) -> None:
        heapq.heappush(self.heap, (tick, 1, self.seq, None))
        self.seq += 1

    def _account_emit(self, wire: Wire) -> None:
        m = self.metrics
        if wire.ack is not None:
            size = len(wire.ack.serialize())
            if size > m.max_ack_bytes:
                m.max_ack_bytes = size
        if wire.kind == ACK:
            m.standalone_acks += 1
        if wire.kind == DATA and wire.src_rsm == self.sc.rsm_s.rsm_id \
                and wire.position is not None and wire.position < self.sc.messages:
            row = m.message(wire.position)
            row.cross_copies += 1
            row.attempts += 1
            if wire.resend_no > 0:
                m.resend_count += 1
        elif wire.kind == DATA and wire.resend_no > 0:
            m.resend_count += 1

    def _route(self, key: tuple[str, int], wires: list[Wire], tick: int) -> None:
        behavior = self.behaviors[key]
        node = self.nodes[key]
        for wire in wires:
            for out in behavior.transform(wire, node, tick):
                side_src = self._side_of(out.src_rsm)
                side_dst = self._side_of(out.dst_rsm)
                if (tick, side_src, out.src, side_dst, out.dst) in self.sc.drops:
                    continue
                self._account_emit(out)
                self._push_wire(out, tick)

    def run(self) -> tuple[Trace, MetricRecord]:
        sc = self.sc
        self._push_tick(1)
        timed_out = False
        while self.heap:
            tick, prio, _, wire = heapq.heappop(self.heap)
            if tick > sc.tick_cap:
                timed_out = True
                break
            if prio == 0:
                assert wire is not None
                self.in_flight -= 1
                key = (self._side_of(wire.dst_rsm), wire.dst)
                if not self.behaviors[key].alive(tick):
                    continue
                node = self.nodes[key]
                out = node.on_wire(wire, tick)
                self._drain_with_quacks(key, tick)
                self._route(key, out, tick)
            else:
                for key in self.node_order:
                    if not self.behaviors[key].alive(tick):
                        continue
                    out = self.nodes[key].on_tick(tick)
                    self._drain_with_quacks(key, tick)
                    self._route(key, out, tick)
                needs = any(self.behaviors[key].alive(tick + 1)
                            and self.nodes[key].needs_tick()
                            for key in self.node_order)
                if needs or self.in_flight > 0:
                    self._push_tick(tick + 1)
        self._finalize(timed_out)
        return self.trace, self.metrics

    def _drain_with_quacks(self, key: tuple[str, int], tick: int) -> None:
        side, idx = key
        node = self.nodes[key]
        label = "%s:%d" % (side, idx)
        correct = self.behaviors[key].spec.kind == CORRECT
        for kind, position, detail in node.drain_events():
            self.trace.add(tick, kind, label, node.local.rsm_id, position, detail)
            if kind == "INVALID_CERT":
                self.metrics.invalid_ignored += 1
            if position is None or position >= self.sc.messages:
                continue
            row = None
            if kind == "DELIVER" and side == "r" and correct:
                row = self.metrics.message(position)
                self.correct_deliveries.setdefault(position, set()).add(idx)
                if row.first_delivery_tick is None:
                    row.first_delivery_tick = tick
            elif kind == "QUACK" and side == "s" and correct:
                row = self.metrics.message(position)
                if row.quack_tick is None:
                    row.quack_tick = tick

    def _finalize(self, timed_out: bool) -> None:
        sc = self.sc
        self.metrics.liveness_timeout = timed_out
        self.trace.liveness_timeout = timed_out
        correct_receivers = [j for j in range(sc.rsm_r.node_count)
                             if self.behaviors[("r", j)].spec.kind == CORRECT]
        delivered_all = True
        stream_complete = True
        for j in correct_receivers:
            node = self.nodes[("r", j)]
            if node.buf.cum < sc.messages:
                stream_complete = False
            if len([p for p, _ in node.buf.delivered_log if p < sc.messages]) < sc.messages:
                delivered_all = False
        if timed_out:
            self.trace.add(sc.tick_cap, "LIVENESS_TIMEOUT", "-", sc.rsm_s.rsm_id,
                           None, "undelivered" if not delivered_all else "")
        self.metrics.delivered_all = delivered_all
        self.metrics.stream_complete = stream_complete

    # exposure for tests
    def correct_quacked_positions(self) -> set[int]:
        out: set[int] = set()
        for i in range(self.sc.rsm_s.node_count):
            if self.behaviors[("s", i)].spec.kind != CORRECT:
                continue
            node = self.nodes[("s", i)]
            out.update(range(node.quack.quack_level))
            out.update(node.quack.quacked_extra)
        return out


def run(scenario: Scenario) -> tuple[Trace, MetricRecord]:
    """Run a scenario to quiescence or the tick cap; never raises on timeout."""
    if scenario.protocol == PICSOU:
        return _Sim(scenario).run()
    metrics = run_baseline(scenario)
    trace = Trace()
    for pos in sorted(metrics.per_message):
        row = metrics.per_message[pos]
        trace.add(1, "SEND", "s:-", scenario.rsm_s.rsm_id, pos,
                  "copies=%d" % row.cross_copies)
        if row.first_delivery_tick is not None:
            trace.add(row.first_delivery_tick, "DELIVER", "r:-",
                      scenario.rsm_r.rsm_id, pos, "")
    trace.liveness_timeout = metrics.liveness_timeout
    return trace, metrics


def run_sim(scenario: Scenario) -> _Sim:
    """Like :func:`run` but returns the simulator for state inspection."""
    sim = _Sim(scenario)
    sim.run()
    return sim


def run_baseline(scenario: Scenario) -> MetricRecord:
    """Message-complexity model of the OST / ATA / LL / OTU baselines."""
    sc = scenario
    sc.validate()
    if sc.protocol not in (OST, ATA, LL, OTU):
        raise ConfigError("run_baseline expects a baseline protocol selector")
    n_s, n_r = sc.rsm_s.node_count, sc.rsm_r.node_count
    faulty_s = {i for (side, i), sp in sc.adversary.items()
                if side == "s" and sp.kind != CORRECT}
    faulty_r = {j for (side, j), sp in sc.adversary.items()
                if side == "r" and sp.kind != CORRECT}
    metrics = MetricRecord(protocol=sc.protocol)
    delivered_all = sc.messages > 0 or True
    timeout_rounds = 4 * sc.latency      # OTU leader-rotation timeout
    for pos in range(sc.messages):
        row = metrics.message(pos)
        row.attempts = 1
        if sc.protocol == OST:
            s = assign_sender(pos, n_s)
            r = assign_receiver(pos, n_s, n_r)
            row.cross_copies = 0 if s in faulty_s else 1
            delivered = s not in faulty_s and r not in faulty_r
        elif sc.protocol == ATA:
            row.cross_copies = (n_s - len(faulty_s)) * n_r
            delivered = len(faulty_s) < n_s
        elif sc.protocol == LL:
            row.cross_copies = 0 if 0 in faulty_s else 1
            delivered = 0 not in faulty_s and 0 not in faulty_r
        else:  # OTU: leader sends to u_r+1 receivers, rotate leader on timeout
            fanout = sc.rsm_r.u + 1
            rounds = 0
            delivered = False
            copies = 0
            for leader in range(min(sc.rsm_s.u + 1, n_s)):
                rounds += 1
                if leader not in faulty_s:
                    copies += fanout
                    delivered = True
                    break
            row.cross_copies = copies
            row.attempts = rounds
            row.first_delivery_tick = 2 + (rounds - 1) * timeout_rounds
        if delivered and row.first_delivery_tick is None:
            row.first_delivery_tick = 2
        if not delivered:
            row.first_delivery_tick = None
            delivered_all = False
    metrics.delivered_all = delivered_all
    metrics.stream_complete = delivered_all
    return metrics


def gc_stall_scenario(mode: str = ADVANCE, hints: bool = True,
                      messages: int = 24) -> Scenario:
    """The premature-GC stall: a Byzantine receiver spreads one message to a
    bare quorum, vouches for it toward the senders, then goes silent.

    The stalled position is quorum-acked and garbage collected at every
    sender, yet most correct receivers never saw it; without the hint
    mechanism the stream can never complete.
    """
    rsm_s = RsmConfig.equal(0, 4, 1, 1)
    rsm_r = RsmConfig.equal(1, 5, 1, 1)
    target = 4
    byz = assign_receiver(target, rsm_s.node_count, rsm_r.node_count)
    confidant = (byz + 1) % rsm_r.node_count
    return Scenario(
        rsm_s=rsm_s,
        rsm_r=rsm_r,
        messages=messages,
        phi=8,
        adversary={("r", byz): AdversarySpec(kind=STALL_BYZANTINE, target=target,
                                             share_with=(confidant,))},
        gc_hints=hints,
        gc_mode=mode,
        tick_cap=600 if hints else 300,
    )
