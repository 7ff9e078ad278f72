"""Strategy behavior: backward/forward placement, the fallback chain,
displacement, waiting, and manual actions."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shopfloor.dispatch import (
    DispatchContext,
    DispatchOptions,
    DispatchRequest,
    apply_overdraft,
    dispatch_force,
    dispatch_opt,
    dispatch_x_competition,
    enqueue_wait_x,
    expire_waiting,
    filter_machines,
    manual_change_restrictions,
    manual_delete_and_replace,
    manual_explicit_split,
    manual_outsource,
    manual_split_placement,
    retry_waiting,
    run_strategy,
    split_cut,
    split_long_runner,
)
from shopfloor.model import (
    CapabilityVector,
    Machine,
    MachineStatus,
    Operation,
    Order,
    OrderState,
    ShiftCalendar,
    Slot,
)
from shopfloor.plan import Plan, makespan, validate_plan

MILL = CapabilityVector.build(processes={"milling"})


def machine(mid="m1", cal=None, *, graded=None, binary=None, processes=None,
            status=MachineStatus.UP, setup_family=None, apt=60):
    capability = CapabilityVector.build(
        graded, binary, processes or {"milling"},
    )
    return Machine(id=mid, area="a1", capability=capability,
                   calendar=cal or ShiftCalendar.always(), status=status,
                   setup_family=setup_family, apt=apt)


def op(op_id, order_id, seq=0, duration=60, *, graded=None, process="milling",
       robustness=0, lots=1, setup_family=None, alternatives=()):
    return Operation(
        id=op_id, order_id=order_id, seq=seq, process=process,
        requirement=CapabilityVector.build(graded, None, {process}),
        duration=duration, robustness=robustness, lots=lots,
        setup_family=setup_family, alternatives=tuple(alternatives),
    )


def order(oid, *ops, priority=3, release=0, due=100000):
    return Order(id=oid, priority=priority, release=release, due=due, operations=tuple(ops))


def context(machines, orders, **kw):
    return DispatchContext(Plan(), {m.id: m for m in machines},
                           {o.id: o for o in orders}, **kw)


class TestFilterMachines:
    def test_process_mismatch_excluded(self):
        mills = [machine("m1"), machine("m2")]
        drill = machine("m3", processes={"drilling"})
        o = op("x", "o1")
        got = filter_machines(o, {m.id: m for m in mills + [drill]})
        assert [m.id for m in got] == ["m1", "m2"]

    def test_graded_requirement_excludes_weak_machine(self):
        m3 = machine("m3", graded={"axes": 3})
        m5 = machine("m5", graded={"axes": 5})
        o = op("x", "o1", graded={"axes": 5})
        got = filter_machines(o, {"m3": m3, "m5": m5})
        assert [m.id for m in got] == ["m5"]

    def test_down_machine_excluded(self):
        got = filter_machines(op("x", "o1"), {
            "m1": machine("m1", status=MachineStatus.DOWN), "m2": machine("m2"),
        })
        assert [m.id for m in got] == ["m2"]

    def test_scope_restricts(self):
        machines = {f"m{i}": machine(f"m{i}") for i in range(4)}
        got = filter_machines(op("x", "o1"), machines, scope={"m1", "m3"})
        assert [m.id for m in got] == ["m1", "m3"]

    def test_process_alternative_widens_candidates(self):
        drill = machine("m1", processes={"drilling"})
        o = op("x", "o1", process="milling", alternatives=["drilling"])
        assert [m.id for m in filter_machines(o, {"m1": drill})] == ["m1"]


class TestOverdraftGate:
    def test_priority5_auto(self):
        assert apply_overdraft(25, 5) == "allowed"

    def test_priority4_asks(self):
        assert apply_overdraft(25, 4) == "needs-approval"

    def test_priority3_denied(self):
        assert apply_overdraft(25, 3) == "denied"

    def test_limit_is_hard(self):
        assert apply_overdraft(30, 5) == "denied"
        assert apply_overdraft(31, 5) == "denied"
        assert apply_overdraft(29, 5) == "allowed"

    def test_configurable_limit(self):
        assert apply_overdraft(45, 5, limit=60) == "allowed"
        assert apply_overdraft(45, 4, limit=60) == "needs-approval"

    @given(st.integers(0, 200), st.integers(1, 5))
    def test_gate_table_exhaustive(self, excess, priority):
        got = apply_overdraft(excess, priority)
        if excess >= 30 or priority <= 3:
            assert got == "denied"
        elif priority == 5:
            assert got == "allowed"
        else:
            assert got == "needs-approval"


class TestSplitCut:
    def test_mode_a_cuts_at_boundary(self):
        assert split_cut(op("x", "o1", duration=120), 80, "a") == 80

    def test_mode_b_cuts_at_lot_boundary(self):
        assert split_cut(op("x", "o1", duration=120, lots=4), 80, "b") == 60

    def test_mode_b_no_lot_fits(self):
        assert split_cut(op("x", "o1", duration=120, lots=2), 50, "b") is None

    def test_mode_c_exact_lots(self):
        assert split_cut(op("x", "o1", duration=120, lots=4), 80, "c", k=2) == 60

    def test_mode_c_fails_when_k_lots_dont_fit(self):
        assert split_cut(op("x", "o1", duration=120, lots=4), 80, "c", k=3) is None

    def test_no_cut_when_operation_fits(self):
        assert split_cut(op("x", "o1", duration=60), 60, "a") is None


class TestSplitLongRunner:
    def test_1500_becomes_three_parts_of_500(self):
        parts = split_long_runner(op("x", "o1", duration=1500))
        assert [p.duration for p in parts] == [500, 500, 500]
        assert [p.id for p in parts] == ["x/p0", "x/p1", "x/p2"]
        assert all(p.split_of == "x" for p in parts)
        assert all(p.seq == parts[0].seq for p in parts)

    def test_1100_stays_whole(self):
        parts = split_long_runner(op("x", "o1", duration=1100))
        assert len(parts) == 1 and parts[0].id == "x"

    def test_threshold_is_strict(self):
        assert len(split_long_runner(op("x", "o1", duration=1200))) == 1

    def test_over_threshold_but_under_two_min_parts(self):
        parts = split_long_runner(op("x", "o1", duration=500), x_threshold=400, y_min_part=300)
        assert len(parts) == 1

    def test_remainder_goes_to_last_part(self):
        parts = split_long_runner(op("x", "o1", duration=1502))
        assert [p.duration for p in parts] == [500, 500, 502]

    @given(st.integers(1201, 20000))
    def test_parts_cover_duration_and_respect_minimum(self, d):
        parts = split_long_runner(op("x", "o1", duration=d))
        assert sum(p.duration for p in parts) == d
        if len(parts) > 1:
            assert all(p.duration >= 300 for p in parts)
            # equal parts stay at or under two minimum parts; the last one
            # also absorbs the division remainder
            assert all(p.duration <= 600 for p in parts[:-1])
            assert parts[-1].duration <= 600 + len(parts) - 1


class TestDispatchOpt:
    def test_single_op_anchored_at_due(self):
        o = order("o1", op("o1-a", "o1"), due=480)
        ctx = context([machine()], [o])
        outcome = dispatch_opt(o, ctx)
        assert outcome.placed
        assert (outcome.slots[0].start, outcome.slots[0].end) == (420, 480)
        assert o.state is OrderState.DISPATCHED

    def test_chain_placed_backward(self):
        o = order("o1", op("o1-a", "o1", 0), op("o1-b", "o1", 1), due=480)
        ctx = context([machine()], [o])
        outcome = dispatch_opt(o, ctx)
        assert outcome.placed
        by_id = {s.op_id: s for s in outcome.slots}
        assert (by_id["o1-b"].start, by_id["o1-b"].end) == (420, 480)
        assert by_id["o1-a"].end <= 420

    def test_all_or_nothing_rollback(self):
        # second chain op needs a 5-axis machine that does not exist
        o = order("o1", op("o1-a", "o1", 0), op("o1-b", "o1", 1, graded={"axes": 5}), due=480)
        ctx = context([machine(graded={"axes": 3})], [o])
        before = ctx.plan.fingerprint()
        outcome = dispatch_opt(o, ctx)
        assert outcome.status == "failed"
        assert "o1-b" in outcome.reason
        assert ctx.plan.fingerprint() == before

    def test_chooses_max_total_index(self):
        # m2 requires a doubled capability, so its machine index is lower
        m1 = machine("m1", graded={"axes": 3})
        m2 = machine("m2", graded={"axes": 6})
        o = order("o1", op("o1-a", "o1", graded={"axes": 3}), due=480)
        ctx = context([m1, m2], [o])
        outcome = dispatch_opt(o, ctx)
        assert outcome.slots[0].machine_id == "m1"

    def test_tiebreak_prefers_lower_machine_id(self):
        o = order("o1", op("o1-a", "o1"), due=480)
        ctx = context([machine("m2"), machine("m1")], [o])
        outcome = dispatch_opt(o, ctx)
        assert outcome.slots[0].machine_id == "m1"

    def test_respects_transit_between_stages(self):
        o = order("o1", op("o1-a", "o1", 0), op("o1-b", "o1", 1), due=480)
        m1, m2 = machine("m1"), machine("m2", processes={"milling"})
        # force the two ops onto different machines by booking m2 early
        ctx = context([m1, m2], [o])
        ctx.transit = lambda a, b: 0 if a == b else 15
        outcome = dispatch_opt(o, ctx)
        assert outcome.placed
        by_id = {s.op_id: s for s in outcome.slots}
        if by_id["o1-a"].machine_id != by_id["o1-b"].machine_id:
            assert by_id["o1-b"].start - by_id["o1-a"].end >= 15
        report = validate_plan(ctx.plan, ctx.orders, ctx.machines, transit=ctx.transit)
        assert report.ok

    def test_validates_on_small_fleet(self):
        orders = [
            order("o1", op("o1-a", "o1", 0, 50), op("o1-b", "o1", 1, 30), due=600),
            order("o2", op("o2-a", "o2", 0, 40), op("o2-b", "o2", 1, 60), due=600),
            order("o3", op("o3-a", "o3", 0, 70), op("o3-b", "o3", 1, 20), due=600),
        ]
        ctx = context([machine("m1"), machine("m2")], orders)
        for o in orders:
            assert dispatch_opt(o, ctx).placed
        assert validate_plan(ctx.plan, ctx.orders, ctx.machines).ok


class TestDispatchForce:
    def test_single_op_at_release(self):
        o = order("o1", op("o1-a", "o1"), release=0)
        ctx = context([machine()], [o])
        outcome = dispatch_force(o, ctx)
        assert outcome.placed
        assert (outcome.slots[0].start, outcome.slots[0].end) == (0, 60)

    def test_forward_chain(self):
        o = order("o1", op("o1-a", "o1", 0, 60), op("o1-b", "o1", 1, 30))
        ctx = context([machine()], [o])
        outcome = dispatch_force(o, ctx)
        by_id = {s.op_id: s for s in outcome.slots}
        assert by_id["o1-a"].start == 0
        assert by_id["o1-b"].start == 60

    def test_due_violation_flagged_not_fatal(self):
        # shop booked until 400; due at 100 forces a late placement
        o1 = order("hog", op("hog-a", "hog", duration=400))
        o2 = order("late", op("late-a", "late", duration=60), due=100)
        ctx = context([machine()], [o1, o2])
        assert dispatch_force(o1, ctx).placed
        outcome = dispatch_force(o2, ctx)
        assert outcome.placed
        assert outcome.due_violation
        assert outcome.slots[0].start == 400

    def test_robustness_flag_prefers_slack_gap(self):
        # two gaps: [0,60) exactly d, and [120,240) with slack
        cal = ShiftCalendar.always()
        m = machine("m1", cal)
        blocker = order("b", op("b-a", "b", duration=60))
        target_on = order("t1", op("t1-a", "t1", duration=60, robustness=30))
        ctx = context([m], [blocker, target_on])
        ctx.plan.insert(Slot("b-a", "m1", 60, 120))
        outcome = dispatch_force(target_on, ctx)
        # robustness index 0 at [0,60) vs 1 at [120,...); timeslot prefers early
        # with equal weights the slack gap wins
        assert outcome.slots[0].start == 120

    def test_robustness_disabled_takes_earliest(self):
        m = machine("m1")
        blocker = order("b", op("b-a", "b", duration=60))
        target = order("t1", op("t1-a", "t1", duration=60, robustness=30))
        ctx = context([m], [blocker, target])
        ctx.plan.insert(Slot("b-a", "m1", 60, 120))
        req = DispatchRequest("t1", options=DispatchOptions(robustness_enabled=False))
        from shopfloor.indexes import WeightConfig
        req.weights = WeightConfig(robustness_enabled=False)
        outcome = dispatch_force(target, ctx, req)
        assert outcome.placed
        assert outcome.slots[0].start == 0

    def test_disabling_robustness_never_breaks_placement(self):
        m = machine("m1")
        target = order("t1", op("t1-a", "t1", duration=60, robustness=30))
        from shopfloor.indexes import WeightConfig
        for enabled in (True, False):
            ctx = context([m], [target])
            req = DispatchRequest("t1", weights=WeightConfig(robustness_enabled=enabled))
            target.state = OrderState.PENDING
            assert dispatch_force(target, ctx, req).placed


class TestForceOverdraft:
    def shop(self, priority):
        # one 480-minute shift per day; 450 minutes already booked
        cal = ShiftCalendar.daily(0, 480)
        m = machine("m1", cal)
        hog = order("hog", op("hog-a", "hog", duration=450))
        o = order("job", op("job-a", "job", duration=55), priority=priority)
        ctx = context([m], [hog, o])
        assert dispatch_force(hog, ctx).placed
        return ctx, o

    def test_priority5_overdrafts_automatically(self):
        ctx, o = self.shop(5)
        req = DispatchRequest("job", options=DispatchOptions(shift_split_mode=None))
        outcome = dispatch_force(o, ctx, req)
        assert outcome.placed
        slot = outcome.slots[0]
        # 30 free before shift end, 25 borrowed past it
        assert (slot.start, slot.end, slot.overdraft) == (450, 505, 25)
        assert validate_plan(ctx.plan, ctx.orders, ctx.machines).ok

    def test_priority4_emits_approval_and_rolls_back(self):
        ctx, o = self.shop(4)
        req = DispatchRequest("job", options=DispatchOptions(shift_split_mode=None))
        before = len(ctx.plan)
        outcome = dispatch_force(o, ctx, req)
        assert outcome.status == "needs-approval"
        assert outcome.approval_id is not None
        assert len(ctx.plan) == before
        assert o.state is OrderState.WAITING
        kinds = [k for k, _ in ctx.events]
        assert "approval-emitted" in kinds

    def test_priority3_falls_through_to_next_day(self):
        ctx, o = self.shop(3)
        req = DispatchRequest("job", options=DispatchOptions(shift_split_mode=None))
        outcome = dispatch_force(o, ctx, req)
        assert outcome.placed
        assert outcome.slots[0].start == 1440  # next shift, no overdraft

    def test_approved_token_is_single_use(self):
        ctx, o = self.shop(4)
        options = DispatchOptions(shift_split_mode=None, overdraft_approved=True)
        outcome = dispatch_force(o, ctx, DispatchRequest("job", options=options))
        assert outcome.placed
        assert outcome.slots[0].overdraft == 25
        assert options.overdraft_approved is False

    def test_excess_at_limit_denied(self):
        cal = ShiftCalendar.daily(0, 480)
        m = machine("m1", cal)
        hog = order("hog", op("hog-a", "hog", duration=450))
        o = order("job", op("job-a", "job", duration=60), priority=5)  # excess 30
        ctx = context([m], [hog, o])
        assert dispatch_force(hog, ctx).placed
        req = DispatchRequest("job", options=DispatchOptions(shift_split_mode=None))
        outcome = dispatch_force(o, ctx, req)
        assert outcome.placed
        assert outcome.slots[0].overdraft == 0
        assert outcome.slots[0].start == 1440


class TestForceShiftSplit:
    def shop(self, duration, lots=1, mode="a", k=1, booked=360):
        cal = ShiftCalendar.daily(0, 480)
        m = machine("m1", cal)
        hog = order("hog", op("hog-a", "hog", duration=booked))
        o = order("job", op("job-a", "job", duration=duration, lots=lots), priority=3)
        ctx = context([m], [hog, o])
        assert dispatch_force(hog, ctx).placed
        req = DispatchRequest("job", options=DispatchOptions(
            overdraft_allowed=False, shift_split_mode=mode, shift_split_k=k,
        ))
        return ctx, o, req

    def test_mode_a_cuts_at_shift_end(self):
        ctx, o, req = self.shop(200, mode="a")
        outcome = dispatch_force(o, ctx, req)
        assert outcome.placed
        parts = sorted(outcome.slots, key=lambda s: s.start)
        assert [(s.start, s.end) for s in parts] == [(360, 480), (1440, 1520)]
        assert [s.part for s in parts] == [0, 1]
        assert validate_plan(ctx.plan, ctx.orders, ctx.machines).ok

    def test_mode_b_cuts_at_lot_boundary(self):
        ctx, o, req = self.shop(200, lots=4, mode="b")  # lots of 50
        outcome = dispatch_force(o, ctx, req)
        parts = sorted(outcome.slots, key=lambda s: s.start)
        # 120 free; last lot boundary inside is 100
        assert [(s.start, s.end) for s in parts] == [(360, 460), (1440, 1540)]

    def test_mode_c_needs_k_full_lots(self):
        ctx, o, req = self.shop(200, lots=4, mode="c", k=3, booked=380)
        # 100 free < 150 = 3 lots; mode c fails, falls to the next day whole
        outcome = dispatch_force(o, ctx, req)
        assert outcome.placed
        assert [(s.start, s.end) for s in outcome.slots] == [(1440, 1640)]

    def test_mode_a_spans_many_shifts_when_needed(self):
        ctx, o, req = self.shop(1000, mode="a")
        outcome = dispatch_force(o, ctx, req)
        assert outcome.placed
        parts = sorted(outcome.slots, key=lambda s: s.start)
        assert sum(s.duration for s in parts) == 1000
        assert len(parts) == 3  # 120 + 480 + 400
        assert validate_plan(ctx.plan, ctx.orders, ctx.machines).ok


class TestForceLongSplit:
    def test_long_runner_splits_when_no_gap_fits(self):
        # 10-hour daily shifts can never hold 1500 contiguous minutes
        cal = ShiftCalendar.daily(0, 600)
        o = order("o1", op("o1-a", "o1", duration=1500))
        ctx = context([machine("m1", cal), machine("m2", cal)], [o])
        req = DispatchRequest("o1", options=DispatchOptions(shift_split_mode=None))
        outcome = dispatch_force(o, ctx, req)
        assert outcome.placed
        assert len(o.operations) == 3
        assert {op_.duration for op_ in o.operations} == {500}
        assert validate_plan(ctx.plan, ctx.orders, ctx.machines).ok

    def test_parts_can_use_different_machines(self):
        cal = ShiftCalendar.daily(0, 600)
        o = order("o1", op("o1-a", "o1", duration=1500))
        ctx = context([machine("m1", cal), machine("m2", cal)], [o])
        req = DispatchRequest("o1", options=DispatchOptions(shift_split_mode=None))
        outcome = dispatch_force(o, ctx, req)
        machines_used = {s.machine_id for s in outcome.slots}
        assert machines_used == {"m1", "m2"}  # parts run side by side

    def test_split_disabled_fails_instead(self):
        cal = ShiftCalendar.daily(0, 600)
        o = order("o1", op("o1-a", "o1", duration=1500))
        ctx = context([machine("m1", cal)], [o])
        req = DispatchRequest("o1", options=DispatchOptions(
            shift_split_mode=None, long_split_enabled=False,
        ))
        outcome = dispatch_force(o, ctx, req)
        assert outcome.status == "failed"
        assert len(o.operations) == 1  # rollback restored the original chain


class TestXCompetition:
    def shop(self):
        m = machine("m1")
        low = order("low", op("low-a", "low", duration=200), priority=1)
        high = order("high", op("high-a", "high", duration=100), priority=5, due=300)
        ctx = context([m], [low, high])
        assert dispatch_force(low, ctx).placed
        return ctx, low, high

    def test_displaces_low_priority_booking(self):
        ctx, low, high = self.shop()
        req = DispatchRequest("high", strategy="X-Competition", x_threshold=3)
        outcome = dispatch_x_competition(high, ctx, req)
        assert outcome.placed
        assert outcome.slots[0].start == 0
        assert outcome.displaced == ("low-a",)
        # victim re-dispatched after the winner
        new_low = ctx.plan.op_slots("low-a")
        assert new_low and new_low[0].start >= 100
        assert validate_plan(ctx.plan, ctx.orders, ctx.machines).ok

    def test_high_priority_bookings_not_touched(self):
        m = machine("m1")
        low = order("low", op("low-a", "low", duration=200), priority=5)
        high = order("high", op("high-a", "high", duration=100), priority=5, due=600)
        ctx = context([m], [low, high])
        assert dispatch_force(low, ctx).placed
        req = DispatchRequest("high", strategy="X-Competition", x_threshold=3)
        outcome = dispatch_x_competition(high, ctx, req)
        assert outcome.placed
        assert outcome.displaced == ()
        assert outcome.slots[0].start == 200  # behaves like Force

    def test_x1_equals_force(self):
        ctx1, low1, high1 = self.shop()
        req = DispatchRequest("high", strategy="X-Competition", x_threshold=1)
        got = dispatch_x_competition(high1, ctx1, req)

        ctx2, low2, high2 = self.shop()
        want = dispatch_force(high2, ctx2)
        assert got.placed and want.placed
        assert [(s.start, s.end, s.machine_id) for s in got.slots] == \
               [(s.start, s.end, s.machine_id) for s in want.slots]
        assert got.displaced == ()

    def test_unplaceable_victim_joins_waiting_pool(self):
        # a second machine-less victim with a huge duration cannot rebook
        cal = ShiftCalendar.daily(0, 480)
        m = machine("m1", cal)
        low = order("low", op("low-a", "low", duration=400), priority=1, due=480)
        high = order("high", op("high-a", "high", duration=450), priority=5, due=480)
        ctx = context([m], [low, high])
        assert dispatch_force(low, ctx).placed
        req = DispatchRequest(
            "high", strategy="X-Competition", x_threshold=3,
            options=DispatchOptions(overdraft_allowed=False, shift_split_mode=None,
                                    long_split_enabled=False),
        )
        outcome = dispatch_x_competition(high, ctx, req)
        assert outcome.placed
        assert outcome.displaced == ("low-a",)
        assert low.state is OrderState.WAITING
        assert [e.order_id for e in ctx.waiting] == ["low"]

    def test_frozen_slots_are_safe(self):
        ctx, low, high = self.shop()
        ctx.plan.freeze("low-a")
        req = DispatchRequest("high", strategy="X-Competition", x_threshold=3)
        outcome = dispatch_x_competition(high, ctx, req)
        assert outcome.placed
        assert outcome.displaced == ()
        assert outcome.slots[0].start == 200


class TestWaitX:
    def test_waits_then_places_on_freed_capacity(self):
        m = machine("m1", ShiftCalendar.daily(0, 480))
        hog = order("hog", op("hog-a", "hog", duration=480), priority=3)
        o = order("job", op("job-a", "job", duration=120), priority=3, due=480)
        ctx = context([m], [hog, o])
        assert dispatch_force(hog, ctx).placed
        req = DispatchRequest("job", strategy="Wait-X", deadline=960,
                              options=DispatchOptions(overdraft_allowed=False,
                                                      shift_split_mode=None))
        # the only free day-one room is behind the hog; due makes day two useless
        outcome = run_strategy(o, ctx, req)
        assert outcome.status == "waiting"
        assert o.state is OrderState.WAITING

        ctx.plan.remove_op("hog-a")
        results = retry_waiting(ctx, "slot-removed")
        assert [oid for oid, _ in results] == ["job"]
        assert ctx.plan.op_slots("job-a")[0].start == 0
        assert not ctx.waiting

    def test_timeout_emits_approval(self):
        m = machine("m1", ShiftCalendar.daily(0, 480))
        hog = order("hog", op("hog-a", "hog", duration=480), priority=3)
        o = order("job", op("job-a", "job", duration=120), priority=3, due=480)
        ctx = context([m], [hog, o])
        assert dispatch_force(hog, ctx).placed
        enqueue_wait_x(o, 960, ctx)
        assert expire_waiting(ctx, 959) == []
        ids = expire_waiting(ctx, 960)
        assert len(ids) == 1 and ids[0].startswith("apv-")
        assert o.state is OrderState.FAILED
        assert o.failure_reason == "wait-x-timeout"

    def test_earlier_deadline_wins_single_gap(self):
        m = machine("m1", ShiftCalendar.daily(0, 480))
        hog = order("hog", op("hog-a", "hog", duration=480), priority=3)
        a = order("a-job", op("a-a", "a-job", duration=400), priority=3, due=480)
        b = order("b-job", op("b-a", "b-job", duration=400), priority=3, due=480)
        ctx = context([m], [hog, a, b])
        assert dispatch_force(hog, ctx).placed
        opts = DispatchOptions(overdraft_allowed=False, shift_split_mode=None)
        run_strategy(b, ctx, DispatchRequest(
            "b-job", strategy="Wait-X", deadline=900, options=opts))
        run_strategy(a, ctx, DispatchRequest(
            "a-job", strategy="Wait-X", deadline=600, options=opts))
        ctx.plan.remove_op("hog-a")
        results = retry_waiting(ctx)
        placed_ids = [oid for oid, _ in results]
        # a's deadline is earlier, so it gets the gap; b keeps waiting
        assert placed_ids[0] == "a-job"
        assert any(e.order_id == "b-job" for e in ctx.waiting)


class TestManualActions:
    def test_explicit_split_partitions_chain(self):
        ops = [op(f"o1-{i}", "o1", seq=i, duration=30) for i in range(4)]
        o = order("o1", *ops)
        ctx = context([machine()], [o])
        siblings = manual_explicit_split(o, 2, ctx)
        assert [s.id for s in siblings] == ["o1", "o1/s1"]
        assert [op_.id for op_ in siblings[0].operations] == ["o1-0", "o1-1"]
        assert [op_.id for op_ in siblings[1].operations] == ["o1-2", "o1-3"]
        assert siblings[1].chain_after == "o1"
        assert all(s.state is OrderState.MANUAL for s in siblings)
        assert "o1/s1" in ctx.orders

    def test_explicit_split_more_parts_than_stages_rejected(self):
        o = order("o1", op("o1-a", "o1"))
        ctx = context([machine()], [o])
        with pytest.raises(ValueError):
            manual_explicit_split(o, 2, ctx)

    def test_chained_siblings_dispatch_in_order(self):
        ops = [op(f"o1-{i}", "o1", seq=i, duration=30) for i in range(4)]
        o = order("o1", *ops)
        ctx = context([machine()], [o])
        first, second = manual_explicit_split(o, 2, ctx)
        assert dispatch_force(first, ctx).placed
        outcome = dispatch_force(second, ctx)
        assert outcome.placed
        first_end = max(s.end for op_ in first.operations for s in ctx.plan.op_slots(op_.id))
        second_start = min(s.start for s in outcome.slots)
        assert second_start >= first_end
        assert validate_plan(ctx.plan, ctx.orders, ctx.machines).ok

    def test_manual_split_placement_validates(self):
        o = order("o1", op("o1-a", "o1", duration=100))
        ctx = context([machine()], [o])
        outcome = manual_split_placement(o, "o1-a", [("m1", 0, 40), ("m1", 100, 160)], ctx)
        assert outcome.placed
        assert len(ctx.plan.op_slots("o1-a")) == 2

    def test_manual_split_wrong_total_rejected(self):
        o = order("o1", op("o1-a", "o1", duration=100))
        ctx = context([machine()], [o])
        outcome = manual_split_placement(o, "o1-a", [("m1", 0, 40)], ctx)
        assert outcome.status == "failed"
        assert "40 of 100" in outcome.reason

    def test_manual_split_overlap_rejected_naming_conflict(self):
        o1 = order("o1", op("o1-a", "o1", duration=60))
        o2 = order("o2", op("o2-a", "o2", duration=60))
        ctx = context([machine()], [o1, o2])
        assert dispatch_force(o1, ctx).placed
        outcome = manual_split_placement(o2, "o2-a", [("m1", 30, 90)], ctx)
        assert outcome.status == "failed"
        assert "o1-a" in outcome.reason
        assert not ctx.plan.op_slots("o2-a")

    def test_manual_split_precedence_violation_rejected(self):
        o = order("o1", op("o1-a", "o1", 0, 60), op("o1-b", "o1", 1, 60))
        ctx = context([machine("m1"), machine("m2")], [o])
        assert manual_split_placement(o, "o1-b", [("m2", 100, 160)], ctx).placed
        outcome = manual_split_placement(o, "o1-a", [("m1", 80, 140)], ctx)
        assert outcome.status == "failed"

    def test_change_restrictions_relaxes_due(self):
        # chain needs 120 minutes but the due window only offers 100
        o = order("o1", op("o1-a", "o1", 0, 60), op("o1-b", "o1", 1, 60), due=100)
        ctx = context([machine()], [o])
        assert dispatch_opt(o, ctx).status == "failed"
        outcome = manual_change_restrictions(o, ctx, due=580, strategy="OPT")
        assert outcome.placed
        assert max(s.end for s in outcome.slots) <= 580

    def test_delete_and_replace(self):
        m = machine("m1", ShiftCalendar.daily(0, 480))
        hog = order("hog", op("hog-a", "hog", duration=480), priority=2)
        o = order("job", op("job-a", "job", duration=200), priority=4, due=480)
        ctx = context([m], [hog, o])
        assert dispatch_force(hog, ctx).placed
        req = DispatchRequest("job", options=DispatchOptions(overdraft_allowed=False,
                                                             shift_split_mode=None))
        outcome = manual_delete_and_replace(o, "hog", ctx, req)
        assert outcome.placed
        assert outcome.slots[0].start == 0
        assert hog.state is OrderState.MANUAL
        assert not ctx.plan.op_slots("hog-a")

    def test_outsource_emits_boundary_event(self):
        o = order("o1", op("o1-a", "o1"))
        ctx = context([machine()], [o])
        assert dispatch_force(o, ctx).placed
        outcome = manual_outsource(o, ctx)
        assert outcome.reason == "outsourced"
        assert o.state is OrderState.OUTSOURCED
        assert not ctx.plan.op_slots("o1-a")
        kinds = [k for k, _ in ctx.events]
        assert "scm-outsource" in kinds


class TestEscalation:
    def two_level_shop(self):
        m1 = machine("m1", ShiftCalendar.daily(0, 480))
        m2 = machine("m2", ShiftCalendar.daily(0, 480))
        hog = order("hog", op("hog-a", "hog", duration=480), priority=3)
        o = order("job", op("job-a", "job", duration=120), priority=3, due=480)
        ctx = context([m1, m2], [hog, o])
        ctx.scopes = lambda order: [frozenset({"m1"}), frozenset({"m1", "m2"})]
        return ctx, hog, o

    def test_widens_scope_one_level_at_a_time(self):
        ctx, hog, o = self.two_level_shop()
        # fill m1 so the home area has no room
        assert dispatch_force(hog, ctx).placed
        outcome = dispatch_force(o, ctx, DispatchRequest(
            "job", options=DispatchOptions(overdraft_allowed=False, shift_split_mode=None),
        ))
        assert outcome.placed
        assert outcome.slots[0].machine_id == "m2"
        escalations = [p for k, p in ctx.events if k == "escalation"]
        assert escalations and escalations[0]["order"] == "job"

    def test_no_escalation_event_when_home_area_suffices(self):
        ctx, hog, o = self.two_level_shop()
        outcome = dispatch_force(o, ctx)
        assert outcome.placed
        assert outcome.slots[0].machine_id == "m1"
        assert not [k for k, _ in ctx.events if k == "escalation"]


class TestStrategySoundness:
    """Random small shops: every placed outcome must validate cleanly."""

    @settings(max_examples=40, deadline=None)
    @given(st.data())
    def test_force_and_opt_always_validate(self, data):
        machine_count = data.draw(st.integers(1, 3))
        machines = [
            machine(f"m{i}", ShiftCalendar.daily(0, 480)) for i in range(machine_count)
        ]
        orders = []
        for i in range(data.draw(st.integers(1, 5))):
            ops = []
            for j in range(data.draw(st.integers(1, 3))):
                ops.append(op(
                    f"o{i}-{j}", f"o{i}", seq=j,
                    duration=data.draw(st.integers(10, 200)),
                    robustness=data.draw(st.integers(0, 30)),
                ))
            orders.append(order(
                f"o{i}", *ops,
                priority=data.draw(st.integers(1, 5)),
                release=data.draw(st.integers(0, 480)),
                due=data.draw(st.integers(2000, 6000)),
            ))
        ctx = context(machines, orders)
        for i, o in enumerate(orders):
            strategy = data.draw(st.sampled_from(["OPT", "Force"]))
            req = DispatchRequest(o.id, strategy=strategy)
            run_strategy(o, ctx, req)
            report = validate_plan(ctx.plan, ctx.orders, ctx.machines)
            assert report.ok, report

    @settings(max_examples=25, deadline=None)
    @given(st.data())
    def test_failed_dispatch_leaves_plan_untouched(self, data):
        machines = [machine("m1", ShiftCalendar.daily(0, 480))]
        hog = order("hog", op("hog-a", "hog", duration=470))
        ctx = context(machines, [hog])
        assert dispatch_force(hog, ctx).placed
        before = ctx.plan.fingerprint()
        # an order that cannot fit day one and whose options are all off
        o = order("tight", op("tight-a", "tight", duration=data.draw(st.integers(20, 400))),
                  due=480)
        ctx.orders["tight"] = o
        outcome = dispatch_opt(o, ctx)
        if outcome.status == "failed":
            assert ctx.plan.fingerprint() == before
