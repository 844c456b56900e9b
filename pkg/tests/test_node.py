import pytest

from quackcast.core import (
    AckReport,
    CommittedMessage,
    ConfigError,
    RsmConfig,
    make_certificate,
)
from quackcast.node import ACK, DATA, FETCH_REQ, LOCAL, PicsouNode, Wire

CFG_S = RsmConfig.equal(0, 4, 1, 1)
CFG_R = RsmConfig.equal(1, 4, 1, 1)


def committed(position, cfg=CFG_S):
    return CommittedMessage(payload=b"p%d" % position, k=position,
                            k_prime=position, cert=make_certificate(cfg, position))


def sender(my_id, **kwargs):
    return PicsouNode(my_id, CFG_S, CFG_R, **kwargs)


def receiver(my_id, **kwargs):
    return PicsouNode(my_id, CFG_R, CFG_S, **kwargs)


def data_wire(position, dst, src=None, cert=None, ack=None):
    src = position % 4 if src is None else src
    return Wire(DATA, 0, src, 1, dst, position=position, k=position,
                cert=cert or make_certificate(CFG_S, position),
                payload=b"p%d" % position,
                ack=ack or AckReport(src, 0, 0))


class TestTransmit:
    def test_absent_stream_number_is_noop(self):
        node = sender(0)
        node.transmit(CommittedMessage(b"x", 5, None, make_certificate(CFG_S, 5)))
        assert node.my_originals == [] and node.pending == []

    def test_missing_quorum_certificate_rejected(self):
        node = sender(0)
        bad = CommittedMessage(b"x", 0, 0, make_certificate(CFG_S, 0, signers=[0]))
        with pytest.raises(ConfigError):
            node.transmit(bad)

    def test_original_owner_emits_on_first_tick(self):
        node = sender(0)
        node.transmit(committed(0))
        wires = node.on_tick(1)
        assert len(wires) == 1
        wire = wires[0]
        assert (wire.kind, wire.dst_rsm, wire.dst, wire.position) == (DATA, 1, 0, 0)
        assert wire.ack is not None          # current ack piggybacked

    def test_non_owner_holds_its_retry_slot(self):
        node = sender(2)
        node.transmit(committed(0))
        assert node.my_originals == []
        assert len(node.pending) == 1
        slot = node.pending[0]
        assert (slot.position, slot.resend_number, slot.receiver) == (0, 2, 2)

    def test_send_pacing_interval(self):
        node = sender(0, send_interval=2)
        node.transmit(committed(0))
        node.transmit(committed(4))
        assert len(node.on_tick(1)) == 1
        assert node.on_tick(2) == []
        assert len(node.on_tick(3)) == 1

    def test_window_stalls_sends(self):
        node = sender(0, send_interval=1, window=0)
        node.transmit(committed(0))
        node.transmit(committed(4))
        assert len(node.on_tick(1)) == 1     # 0 - quack_level <= 0 allows it
        assert node.on_tick(2) == []         # position 4 blocked until quacks


class TestForeignPath:
    def test_fresh_delivery_broadcasts_to_peers(self):
        node = receiver(0)
        wires = node.on_wire(data_wire(0, dst=0), 2)
        locals_ = [w for w in wires if w.kind == LOCAL]
        assert sorted(w.dst for w in locals_) == [1, 2, 3]
        assert all(w.dst_rsm == 1 for w in locals_)
        events = dict((k, p) for k, p, _ in node.drain_events())
        assert events.get("DELIVER") == 0 and events.get("BROADCAST") == 0

    def test_invalid_certificate_only_counts(self):
        node = receiver(1)
        bogus = make_certificate(CFG_S, 0, signers=[0], threshold=3)
        wires = node.on_wire(data_wire(0, dst=1, cert=bogus), 2)
        assert wires == []
        assert [k for k, _, _ in node.drain_events()] == ["INVALID_CERT"]
        assert node.buf.cum == 0

    def test_piggybacked_ack_feeds_quack_state(self):
        node = receiver(0)
        node.transmit(committed(0, CFG_R))    # reverse stream exists
        report = AckReport(2, 0, 1)
        node.on_wire(data_wire(0, dst=0, ack=report), 2)
        assert node.quack.highest_ack[2] == 1


class TestTickAcks:
    def test_owed_ack_goes_out_on_cadence(self):
        node = receiver(0, ack_interval=2)
        node.on_wire(data_wire(0, dst=0), 2)
        node.drain_events()
        wires = node.on_tick(2)
        assert [w.kind for w in wires] == [ACK]
        assert wires[0].dst == 0             # rotation starts at my own id
        assert wires[0].ack.cum_ack == 1

    def test_nothing_owed_nothing_sent(self):
        node = receiver(3)
        assert node.on_tick(2) == []
        assert not node.needs_tick()

    def test_rotation_advances_per_ack(self):
        node = receiver(1, ack_interval=2)
        node.on_wire(data_wire(1, dst=1), 2)
        first = node.on_tick(2)[0].dst
        node.on_wire(data_wire(5, dst=1), 4)
        second = node.on_tick(4)[0].dst
        assert (first, second) == (1, 2)


class TestFetchServing:
    def test_holder_serves_requested_positions(self):
        node = receiver(0)
        node.on_wire(data_wire(0, dst=0), 2)
        node.drain_events()
        req = Wire(FETCH_REQ, 1, 2, 1, 0, fetch_positions=(0, 1))
        replies = node.on_wire(req, 4)
        assert len(replies) == 1             # holds 0, lacks 1
        assert (replies[0].kind, replies[0].dst, replies[0].position) == (LOCAL, 2, 0)


class TestHintReplies:
    def test_stuck_receiver_gets_direct_hint(self):
        node = sender(0, gc_hints=True)
        for p in range(6):
            node.transmit(committed(p))
        # receivers 0 and 1 ack everything; receiver 2 is stuck at 4
        for rid in (0, 1):
            node.on_wire(Wire(ACK, 1, rid, 0, 0, ack=AckReport(rid, 0, 6)), 3)
        node.drain_events()
        node.on_wire(Wire(ACK, 1, 2, 0, 0, ack=AckReport(2, 0, 4)), 5)
        assert node.quack.quack_level == 6
        # repeats complete a round (r+1 = 2 distinct stuck receivers)
        node.on_wire(Wire(ACK, 1, 3, 0, 0, ack=AckReport(3, 0, 4)), 7)
        node.on_wire(Wire(ACK, 1, 2, 0, 0, ack=AckReport(2, 0, 4)), 9)
        wires = node.on_wire(Wire(ACK, 1, 3, 0, 0, ack=AckReport(3, 0, 4)), 11)
        assert node.quack.hint_active
        reply = [w for w in wires if w.kind == ACK]
        assert reply and reply[0].dst == 3
        assert reply[0].ack.highest_quacked_hint == 6

    def test_hints_disabled_no_reply(self):
        node = sender(0, gc_hints=False)
        for p in range(6):
            node.transmit(committed(p))
        for rid in (0, 1):
            node.on_wire(Wire(ACK, 1, rid, 0, 0, ack=AckReport(rid, 0, 6)), 3)
        for _ in range(3):
            node.on_wire(Wire(ACK, 1, 2, 0, 0, ack=AckReport(2, 0, 4)), 5)
            node.on_wire(Wire(ACK, 1, 3, 0, 0, ack=AckReport(3, 0, 4)), 5)
        assert all(w.kind != ACK for w in
                   node.on_wire(Wire(ACK, 1, 2, 0, 0, ack=AckReport(2, 0, 4)), 7))

    def test_receiver_applies_hint_watermark(self):
        node = receiver(2, gc_hints=True)
        for p in (0, 1, 2, 5, 6):
            node.on_wire(data_wire(p, dst=2), 2)
        node.drain_events()
        assert node.buf.cum == 3
        hint = AckReport(0, 0, 0, highest_quacked_hint=5)
        node.on_wire(Wire(ACK, 0, 0, 1, 2, ack=hint), 4)
        assert node.buf.cum == 3             # one sender below the r+1 quorum
        hint2 = AckReport(1, 0, 0, highest_quacked_hint=5)
        node.on_wire(Wire(ACK, 0, 1, 1, 2, ack=hint2), 6)
        assert node.buf.cum == 7             # 3..4 marked, 5..6 already held


class TestWeightedScheduling:
    def test_dss_owns_positions_by_quota(self):
        cfg_s = RsmConfig(0, 3, (2, 1, 1), 1, 1)
        node = PicsouNode(0, cfg_s, CFG_R)
        assert node.weighted
        for p in range(8):
            node.transmit(committed(p, cfg_s))
        # schedule [0,1,2,0] gives node 0 two slots per 4-position quantum
        assert node.my_originals == [0, 3, 4, 7]

    def test_weighted_retry_slot_uses_slot_walk(self):
        cfg_s = RsmConfig(0, 3, (2, 1, 1), 1, 1)
        node = PicsouNode(2, cfg_s, CFG_R)
        node.transmit(committed(1, cfg_s))
        slot = node.pending[0]
        assert (slot.position, slot.resend_number, slot.receiver) == (1, 1, 2)
