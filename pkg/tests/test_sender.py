from quackcast.core import AckReport
from quackcast.sender import (
    DUP_JOIN,
    DUP_ROUND,
    QUACKED,
    PendingSend,
    QuackState,
    gc_collect,
    plan_resends,
)


def ack(from_replica, cum, phi=(), view=0):
    return AckReport(from_replica, view, cum, phi)


def equal_state(n=4, u=1, r=1):
    return QuackState([1] * n, u, r)


def brute_quack_level(acks, threshold):
    # independent oracle: largest contiguous prefix where enough receivers
    # acked past each position
    level = 0
    while sum(1 for a in acks if a > level) >= threshold:
        level += 1
    return level


class TestQuackFormation:
    def test_two_acks_cover_first_position(self):
        st = equal_state()
        st.record_ack(ack(0, 1))
        assert st.quack_level == 0
        events = st.record_ack(ack(3, 4))
        assert st.quack_level == 1          # position 0 is covered twice
        assert [e.position for e in events if e.kind == QUACKED] == [0]

    def test_matches_brute_force_rule(self):
        acks = [4, 4, 4, 5]
        st = equal_state()
        for i, a in enumerate(acks):
            st.record_ack(ack(i, a))
        assert st.quack_level == brute_quack_level(acks, threshold=2) == 4

    def test_all_zero(self):
        st = equal_state()
        for i in range(4):
            st.record_ack(ack(i, 0))
        assert st.quack_level == 0

    def test_weighted_threshold(self):
        # share-weighted: one heavy receiver alone reaches u+1
        st = QuackState([3, 1, 1], u=2, r=0)
        st.record_ack(ack(0, 5))
        assert st.quack_level == 5

    def test_phi_claims_quack_individual_positions(self):
        st = equal_state()
        st.record_ack(ack(0, 4, (0, 0, 0, 1)))    # holds 7, missing 4..6
        st.record_ack(ack(1, 4, (0, 0, 0, 1)))
        assert st.quack_level == 4
        assert 7 in st.quacked_extra
        assert not st.is_quacked(4)

    def test_view_mismatch_ignored(self):
        st = equal_state()
        st.record_ack(ack(0, 4, view=1))
        st.record_ack(ack(1, 4, view=1))
        assert st.quack_level == 0

    def test_unknown_replica_ignored(self):
        st = equal_state()
        st.record_ack(ack(9, 4))
        assert st.quack_level == 0

    def test_max_position_caps_fabricated_acks(self):
        st = equal_state()
        st.record_ack(ack(0, 10 ** 9), max_position=8)
        st.record_ack(ack(1, 10 ** 9), max_position=8)
        assert st.quack_level == 8


class TestDuplicateRounds:
    def test_two_distinct_repeats_complete_a_round(self):
        st = equal_state()
        st.record_ack(ack(0, 4))
        st.record_ack(ack(1, 4))            # positions 0..3 quacked
        assert st.quack_level == 4
        events = st.record_ack(ack(0, 4))   # first duplicate
        assert [e.kind for e in events] == [DUP_JOIN]
        assert st.dup_count.get(4, 0) == 0
        events = st.record_ack(ack(1, 4))   # second distinct duplicate
        assert any(e.kind == DUP_ROUND and e.position == 4 and e.count == 1
                   for e in events)

    def test_one_receiver_repeating_counts_once(self):
        st = equal_state()
        st.record_ack(ack(0, 4))
        st.record_ack(ack(1, 4))
        for _ in range(5):
            st.record_ack(ack(0, 4))
        assert st.dup_count.get(4, 0) == 0

    def test_crash_only_sizing_single_duplicate(self):
        # r == 0: a single repeat elects the retransmitter immediately
        st = QuackState([1] * 3, u=1, r=0)
        st.record_ack(ack(0, 2))
        st.record_ack(ack(1, 2))
        events = st.record_ack(ack(0, 2))
        assert any(e.kind == DUP_ROUND for e in events)

    def test_duplicates_below_stable_base_do_not_count(self):
        st = equal_state()
        st.record_ack(ack(0, 4))
        events = st.record_ack(ack(0, 4))   # nothing quacked yet
        assert events == []
        assert st.dup_count.get(4, 0) == 0

    def test_round_resets_after_completion(self):
        st = equal_state()
        st.record_ack(ack(0, 4))
        st.record_ack(ack(1, 4))
        st.record_ack(ack(0, 4))
        st.record_ack(ack(1, 4))            # round 1 complete
        assert st.dup_count[4] == 1
        st.record_ack(ack(2, 4))            # fresh ack then repeat
        st.record_ack(ack(2, 4))
        assert st.dup_count[4] == 1         # one member of round 2
        st.record_ack(ack(3, 4))
        st.record_ack(ack(3, 4))
        assert st.dup_count[4] == 2

    def test_phi_missing_bits_open_parallel_rounds(self):
        st = equal_state()
        report = ack(0, 4, (0, 0, 1))       # missing 4 and 5, holds 6
        st.record_ack(ack(0, 4))
        st.record_ack(ack(1, 4))
        st.record_ack(report)
        st.record_ack(ack(1, 4, (0, 0, 1)))
        assert st.dup_count[4] == 1
        assert st.dup_count[5] == 1

    def test_stuck_below_gc_horizon_activates_hints(self):
        st = equal_state()
        st.record_ack(ack(0, 6))
        st.record_ack(ack(1, 6))            # level 6, then receiver 2 stuck at 4
        gc_collect(st)
        st.record_ack(ack(2, 4))
        st.record_ack(ack(2, 4))
        st.record_ack(ack(3, 4))
        st.record_ack(ack(3, 4))
        assert st.hint_active
        assert st.dup_count[4] >= 1

    def test_liars_below_threshold_never_trigger(self):
        # no-spurious-resend: r Byzantine receivers repeating cannot complete
        # a round on their own
        for r in (1, 2):
            st = QuackState([1] * (3 * r + 1), u=r, r=r)
            for i in range(r + 1):
                st.record_ack(ack(i, 4))    # quack positions 0..3
            for _ in range(10):
                for liar in range(r):       # r liars repeat forever
                    st.record_ack(ack(liar, 4))
            assert st.dup_count.get(4, 0) == 0


class TestPlanResends:
    def test_due_slot_fires(self):
        st = equal_state()
        st.record_ack(ack(0, 4))
        st.record_ack(ack(1, 4))
        st.record_ack(ack(0, 4))
        st.record_ack(ack(1, 4))
        pending = [PendingSend(4, 1, receiver=2)]
        due = plan_resends(st, pending)
        assert [(p.position, p.receiver) for p in due] == [(4, 2)]
        assert pending == []

    def test_quacked_slot_erased(self):
        st = equal_state()
        st.record_ack(ack(0, 8))
        st.record_ack(ack(1, 8))
        pending = [PendingSend(4, 1, receiver=2)]
        assert plan_resends(st, pending) == []
        assert pending == []

    def test_not_yet_due_slot_waits(self):
        st = equal_state()
        st.dup_count[4] = 1
        pending = [PendingSend(4, 2, receiver=3)]
        assert plan_resends(st, pending) == []
        assert pending == [PendingSend(4, 2, receiver=3)]

    def test_single_retransmitter_across_replicas(self):
        # replay one ack stream into four sender replicas: for each completed
        # round exactly one of them fires
        states = [equal_state() for _ in range(4)]
        pendings = []
        for me in range(4):
            slots = [PendingSend(4, t, receiver=(1 + t) % 4)
                     for t in range(1, 9) if (0 + t) % 4 == me]
            pendings.append(slots)
        stream = [ack(0, 4), ack(1, 4), ack(2, 4), ack(3, 4)]
        stream += [ack(i, 4) for i in range(4)]   # one repeat each: two rounds
        fired: list[tuple[int, int]] = []
        for report in stream:
            for me in range(4):
                states[me].record_ack(report)
                for slot in plan_resends(states[me], pendings[me]):
                    fired.append((me, slot.resend_number))
        assert fired == [(1, 1), (2, 2)]


class TestGcCollect:
    def test_releases_prefix(self):
        st = equal_state()
        st.record_ack(ack(0, 4))
        st.record_ack(ack(1, 4))
        assert gc_collect(st) == [0, 1, 2, 3]
        assert st.gc_horizon == 4

    def test_nothing_to_release(self):
        st = equal_state()
        assert gc_collect(st) == []

    def test_incremental(self):
        st = equal_state()
        st.record_ack(ack(0, 2))
        st.record_ack(ack(1, 2))
        assert gc_collect(st) == [0, 1]
        st.record_ack(ack(0, 5))
        st.record_ack(ack(1, 5))
        assert gc_collect(st) == [2, 3, 4]
