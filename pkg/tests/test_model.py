"""Domain type behavior: calendars, capability coverage, lots, priorities."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shopfloor.model import (
    WEEK_MINUTES,
    CapabilityVector,
    Machine,
    Operation,
    Order,
    ShiftCalendar,
    Slot,
    dynamic_priority,
)


def cap(graded=None, binary=None, processes=None):
    return CapabilityVector.build(graded, binary, processes)


def make_op(op_id="op1", order_id="o1", seq=0, duration=60, **kw):
    kw.setdefault("process", "milling")
    kw.setdefault("requirement", cap(processes={"milling"}))
    return Operation(id=op_id, order_id=order_id, seq=seq, duration=duration, **kw)


class TestCapabilityVector:
    def test_covers_requires_binary_superset(self):
        req = cap(binary={"dnc_net"})
        assert cap(binary={"dnc_net", "probe"}).covers(req)
        assert not cap(binary=set()).covers(req)

    def test_covers_requires_graded_at_least(self):
        req = cap(graded={"axes": 3})
        assert cap(graded={"axes": 3}).covers(req)
        assert cap(graded={"axes": 5}).covers(req)
        assert not cap(graded={"axes": 2}).covers(req)
        assert not cap().covers(req)

    def test_graded_values_must_be_positive(self):
        with pytest.raises(ValueError):
            cap(graded={"axes": 0})

    def test_duplicate_graded_names_rejected(self):
        with pytest.raises(ValueError):
            CapabilityVector(graded=(("axes", 3.0), ("axes", 4.0)))


class TestShiftCalendar:
    def test_always_spans_whole_week(self):
        cal = ShiftCalendar.always()
        assert cal.open_minutes(0, WEEK_MINUTES) == WEEK_MINUTES

    def test_windows_merge_across_week_wrap(self):
        # continuous operation expressed as one full-week window must not
        # produce a seam at the week boundary
        cal = ShiftCalendar.always()
        windows = list(cal.windows(WEEK_MINUTES - 100, WEEK_MINUTES + 100))
        assert len(windows) == 1
        ws, we = windows[0]
        assert ws <= WEEK_MINUTES - 100 and we >= WEEK_MINUTES + 100

    def test_daily_shift_repeats(self):
        cal = ShiftCalendar.daily(6 * 60, 14 * 60)
        assert cal.window_at(6 * 60) == (360, 840)
        assert cal.window_at(6 * 60 - 1) is None
        # second day
        assert cal.window_at(1440 + 360) == (1440 + 360, 1440 + 840)

    def test_adjacent_windows_merge(self):
        cal = ShiftCalendar(week=((0, 480), (480, 960)))
        assert cal.window_at(479) == (0, 960)
        assert cal.window_at(480) == (0, 960)

    def test_overlapping_windows_rejected(self):
        with pytest.raises(ValueError):
            ShiftCalendar(week=((0, 480), (400, 960)))

    def test_open_minutes_partial_overlap(self):
        cal = ShiftCalendar.daily(0, 480)
        assert cal.open_minutes(240, 1440 + 240) == 240 + 240

    @given(st.integers(0, 3 * WEEK_MINUTES), st.integers(1, 2000))
    def test_windows_sorted_disjoint(self, start, length):
        cal = ShiftCalendar.daily(8 * 60, 16 * 60)
        windows = list(cal.windows(start, start + length))
        for (a1, b1), (a2, b2) in zip(windows, windows[1:]):
            assert b1 < a2  # merged output leaves real off-shift time between


class TestOperation:
    def test_lot_boundaries_even_split(self):
        op = make_op(duration=90, lots=3)
        assert op.lot_size == 30
        assert op.lot_boundaries() == [30, 60, 90]

    def test_last_lot_absorbs_remainder(self):
        op = make_op(duration=100, lots=3)  # ceil(100/3) = 34
        assert op.lot_size == 34
        assert op.lot_boundaries() == [34, 68, 100]

    def test_degenerate_final_lot_rejected(self):
        # ceil(5/4)=2 would leave the final lot with -1 minutes
        with pytest.raises(ValueError):
            make_op(duration=5, lots=4)

    def test_zero_duration_rejected(self):
        with pytest.raises(ValueError):
            make_op(duration=0)

    @given(st.integers(1, 500), st.integers(1, 20))
    def test_lots_tile_duration(self, duration, lots):
        try:
            op = make_op(duration=duration, lots=lots)
        except ValueError:
            return
        bounds = op.lot_boundaries()
        assert bounds[-1] == duration
        assert all(b2 > b1 for b1, b2 in zip(bounds, bounds[1:]))


class TestOrder:
    def test_priority_bounds(self):
        with pytest.raises(ValueError):
            Order(id="o1", priority=0, release=0, due=100, operations=(make_op(),))
        with pytest.raises(ValueError):
            Order(id="o1", priority=6, release=0, due=100, operations=(make_op(),))

    def test_due_after_release(self):
        with pytest.raises(ValueError):
            Order(id="o1", priority=3, release=100, due=100, operations=(make_op(),))

    def test_stages_group_equal_seq(self):
        ops = (
            make_op("a", seq=0),
            make_op("b", seq=1),
            make_op("c", seq=1),
            make_op("d", seq=2),
        )
        order = Order(id="o1", priority=3, release=0, due=1000, operations=ops)
        stages = order.stages()
        assert [len(s) for s in stages] == [1, 2, 1]
        assert {op.id for op in stages[1]} == {"b", "c"}

    def test_arrival_defaults_to_release(self):
        order = Order(id="o1", priority=3, release=50, due=100, operations=())
        assert order.arrival == 50


class TestDynamicPriority:
    def test_base_without_waiting(self):
        assert dynamic_priority(2, 0, 480) == 2

    def test_one_step_per_interval(self):
        assert dynamic_priority(2, 480, 480) == 3
        assert dynamic_priority(2, 959, 480) == 3
        assert dynamic_priority(2, 960, 480) == 4

    def test_caps_at_five(self):
        assert dynamic_priority(4, 480 * 10, 480) == 5
        assert dynamic_priority(5, 0, 480) == 5

    @given(st.integers(1, 5), st.integers(0, 100000), st.integers(1, 10000))
    def test_bounds_and_monotonicity(self, base, wait, interval):
        p = dynamic_priority(base, wait, interval)
        assert base <= p <= 5
        assert dynamic_priority(base, wait + interval, interval) >= p


def test_slot_rejects_empty_interval():
    with pytest.raises(ValueError):
        Slot(op_id="op1", machine_id="m1", start=10, end=10)


def test_machine_requires_positive_apt():
    with pytest.raises(ValueError):
        Machine(id="m1", area="a1", capability=cap(), calendar=ShiftCalendar.always(), apt=0)
