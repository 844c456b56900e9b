import random

from hypothesis import given, settings, strategies as st

from quackcast.core import CommittedMessage, RsmConfig, make_certificate
from quackcast.receiver import ADVANCE, FETCH, AckBuffer, apply_gc_hint, hint_watermark

CFG = RsmConfig.equal(0, 4, 1, 1)


def msg(position, cfg=CFG, valid=True):
    cert = make_certificate(cfg, position)
    if not valid:
        cert = make_certificate(cfg, position, signers=[0], threshold=3)
    return CommittedMessage(payload=b"m%d" % position, k=position,
                            k_prime=position, cert=cert)


class TestForeignPath:
    def test_first_message_delivers_and_broadcasts(self):
        buf = AckBuffer()
        delivered, broadcast = buf.on_foreign_message(msg(0), CFG)
        assert delivered and broadcast
        assert buf.cum == 1

    def test_out_of_order_held_back(self):
        buf = AckBuffer()
        for p in range(4):
            buf.on_foreign_message(msg(p), CFG)
        delivered, _ = buf.on_foreign_message(msg(5), CFG)
        assert delivered
        assert buf.cum == 4          # still waiting on position 4

    def test_invalid_cert_is_noop(self):
        buf = AckBuffer()
        delivered, broadcast = buf.on_foreign_message(msg(0, valid=False), CFG)
        assert not delivered and not broadcast
        assert buf.cum == 0 and not buf.received

    def test_duplicate_is_noop(self):
        buf = AckBuffer()
        buf.on_foreign_message(msg(0), CFG)
        assert buf.on_foreign_message(msg(0), CFG) == (False, False)

    def test_nonzero_rebroadcast_number_defers(self):
        buf = AckBuffer()
        delivered, broadcast = buf.on_foreign_message(msg(0), CFG, rebroadcast_number=2)
        assert delivered and not broadcast


class TestLocalPath:
    def test_gap_fill_jumps_counter(self):
        buf = AckBuffer()
        buf.on_foreign_message(msg(0), CFG)
        for p in (1, 2, 3):
            assert buf.on_local_broadcast(msg(p), CFG)
        assert buf.cum == 4

    def test_idempotent(self):
        buf = AckBuffer()
        assert buf.on_local_broadcast(msg(1), CFG)
        assert not buf.on_local_broadcast(msg(1), CFG)
        assert buf.cum == 0

    def test_revalidates_certificates(self):
        buf = AckBuffer()
        assert not buf.on_local_broadcast(msg(0, valid=False), CFG)

    @given(st.permutations(list(range(8))), st.integers(min_value=0, max_value=255))
    @settings(max_examples=50)
    def test_no_double_delivery_over_interleavings(self, order, pathseed):
        # foreign/local arrival interleavings never double-deliver a position
        rng = random.Random(pathseed)
        buf = AckBuffer()
        for p in order:
            if rng.random() < 0.5:
                buf.on_foreign_message(msg(p), CFG)
            else:
                buf.on_local_broadcast(msg(p), CFG)
            if rng.random() < 0.3:
                buf.on_local_broadcast(msg(p), CFG)
        positions = [p for p, _ in buf.delivered_log]
        assert sorted(positions) == sorted(set(positions))
        assert buf.cum == 8


class TestMakeAck:
    def test_full_prefix(self):
        buf = AckBuffer()
        for p in range(4):
            buf.on_foreign_message(msg(p), CFG)
        report = buf.make_ack(2)
        assert (report.cum_ack, report.phi_list) == (4, ())

    def test_lookahead_bit(self):
        buf = AckBuffer()
        for p in (0, 1, 2, 3, 7):
            buf.on_foreign_message(msg(p), CFG)
        report = buf.make_ack(0)
        assert report.cum_ack == 4
        assert report.phi_list == (0, 0, 0, 1)

    def test_empty(self):
        report = AckBuffer().make_ack(1)
        assert (report.cum_ack, report.phi_list) == (0, ())

    def test_window_capped(self):
        buf = AckBuffer(phi_cap=4)
        buf.on_foreign_message(msg(9), CFG)
        assert buf.make_ack(0).phi_list == ()    # out of window: held, invisible

    def test_cum_monotone_and_phi_above_cum(self):
        buf = AckBuffer()
        last = 0
        rng = random.Random(3)
        for p in rng.sample(range(20), 20):
            buf.on_foreign_message(msg(p), CFG)
            report = buf.make_ack(0)
            assert report.cum_ack >= last
            last = report.cum_ack
            for j, bit in enumerate(report.phi_list):
                if bit:
                    assert report.cum_ack + j >= report.cum_ack


class TestGcHints:
    def test_advance_after_quorum_of_hints(self):
        buf = AckBuffer()
        for p in range(6):
            buf.on_foreign_message(msg(p), CFG)
        hints = {}
        assert not apply_gc_hint(buf, sender=0, hint=10, hints_seen=hints, r_s=1)
        assert buf.cum == 6          # one hint is below the r+1 threshold
        assert apply_gc_hint(buf, sender=1, hint=10, hints_seen=hints, r_s=1)
        assert buf.cum == 10

    def test_repeat_hints_from_one_sender_insufficient(self):
        buf = AckBuffer()
        hints = {}
        for _ in range(5):
            assert not apply_gc_hint(buf, sender=2, hint=7, hints_seen=hints, r_s=1)
        assert buf.cum == 0

    def test_watermark_is_rth_largest(self):
        assert hint_watermark({0: 10, 1: 8, 2: 12}, r_s=1) == 10
        assert hint_watermark({0: 10}, r_s=1) == 0

    def test_fetch_materializes_payloads(self):
        peer_store = {p: msg(p) for p in range(10)}
        buf = AckBuffer()
        for p in range(6):
            buf.on_foreign_message(msg(p), CFG)
        hints = {0: 10, 1: 10}
        moved = apply_gc_hint(buf, sender=2, hint=10, hints_seen=hints, r_s=1,
                              mode=FETCH, fetch=peer_store.get, sender_rsm=CFG)
        assert moved and buf.cum == 10
        assert {p for p, _ in buf.delivered_log} == set(range(10))

    def test_advance_marks_without_delivering(self):
        buf = AckBuffer()
        hints = {0: 3, 1: 3}
        apply_gc_hint(buf, sender=1, hint=3, hints_seen=hints, r_s=1, mode=ADVANCE)
        assert buf.cum == 3
        assert buf.delivered_log == []
