"""Plan container, gap search, and schedule validation.

A plan is a mutable set of immutable slots indexed by operation and by
machine. Validation separates structural errors (references that cannot be
resolved) from constraint violations (precedence, overlap, shift windows,
missing reservations).
"""

from __future__ import annotations

import bisect
import hashlib
import json
from dataclasses import dataclass, field

from .model import Duration, Machine, MachineStatus, Order, Slot, TimeInstant


@dataclass(frozen=True)
class Gap:
    """A maximal free interval on one machine within working hours."""

    machine_id: str
    start: TimeInstant
    end: TimeInstant

    @property
    def duration(self) -> Duration:
        return self.end - self.start


@dataclass(frozen=True)
class Violation:
    kind: str  # precedence | overlap | shift | reservation
    op_id: str
    machine_id: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[str, ...]
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.errors and not self.violations


class SlotConflictError(ValueError):
    """Raised when an inserted slot overlaps an existing booking."""

    def __init__(self, new: Slot, existing: Slot):
        self.new = new
        self.existing = existing
        super().__init__(
            f"slot [{new.start},{new.end}) for {new.op_id} on {new.machine_id} "
            f"overlaps [{existing.start},{existing.end}) for {existing.op_id}"
        )


class Plan:
    """Mutable schedule: slots keyed by (op_id, part) and sorted per machine."""

    def __init__(self, slots: tuple[Slot, ...] = ()):
        self._by_key: dict[tuple[str, int], Slot] = {}
        self._by_machine: dict[str, list[Slot]] = {}
        for slot in slots:
            self.insert(slot)

    def __len__(self) -> int:
        return len(self._by_key)

    def __contains__(self, op_id: str) -> bool:
        return any(k[0] == op_id for k in self._by_key)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Plan):
            return NotImplemented
        return self._by_key == other._by_key

    def slots(self) -> list[Slot]:
        """All slots ordered by (start, machine, op, part)."""
        out = [s for lst in self._by_machine.values() for s in lst]
        out.sort(key=lambda s: (s.start, s.machine_id, s.op_id, s.part or 0))
        return out

    def machine_slots(self, machine_id: str) -> list[Slot]:
        return list(self._by_machine.get(machine_id, ()))

    def machines_used(self) -> list[str]:
        return sorted(m for m, lst in self._by_machine.items() if lst)

    def op_slots(self, op_id: str) -> list[Slot]:
        found = [s for k, s in self._by_key.items() if k[0] == op_id]
        found.sort(key=lambda s: s.start)
        return found

    def get(self, op_id: str, part: int | None = None) -> Slot | None:
        return self._by_key.get((op_id, -1 if part is None else part))

    def insert(self, slot: Slot) -> None:
        if slot.key in self._by_key:
            raise ValueError(f"duplicate slot for {slot.key}")
        row = self._by_machine.setdefault(slot.machine_id, [])
        i = bisect.bisect_left([s.start for s in row], slot.start)
        if i > 0 and row[i - 1].end > slot.start:
            raise SlotConflictError(slot, row[i - 1])
        if i < len(row) and row[i].start < slot.end:
            raise SlotConflictError(slot, row[i])
        row.insert(i, slot)
        self._by_key[slot.key] = slot

    def remove(self, op_id: str, part: int | None = None) -> Slot:
        key = (op_id, -1 if part is None else part)
        slot = self._by_key.pop(key, None)
        if slot is None:
            raise KeyError(f"no slot for {key}")
        self._by_machine[slot.machine_id].remove(slot)
        return slot

    def remove_op(self, op_id: str) -> list[Slot]:
        """Remove every part of an operation; returns what was removed."""
        removed = self.op_slots(op_id)
        for slot in removed:
            self.remove(slot.op_id, slot.part)
        return removed

    def freeze(self, op_id: str) -> None:
        for slot in self.op_slots(op_id):
            self.remove(slot.op_id, slot.part)
            self.insert(Slot(**{**slot.__dict__, "frozen": True}))

    def clone(self) -> "Plan":
        dup = Plan()
        dup._by_key = dict(self._by_key)
        dup._by_machine = {m: list(lst) for m, lst in self._by_machine.items()}
        return dup

    def restore_from(self, other: "Plan") -> None:
        """Adopt another plan's contents in place, keeping this identity
        (rollback support)."""
        self._by_key = dict(other._by_key)
        self._by_machine = {m: list(lst) for m, lst in other._by_machine.items()}

    def fingerprint(self) -> str:
        rows = [
            (s.op_id, s.part, s.machine_id, s.start, s.end, s.overdraft)
            for s in self.slots()
        ]
        blob = json.dumps(rows, separators=(",", ":"), sort_keys=False)
        return hashlib.sha256(blob.encode()).hexdigest()


class OutOfShiftError(ValueError):
    """Raised when an inserted slot leaves working hours beyond its declared
    overdraft tail."""

    def __init__(self, slot: Slot, window: tuple[int, int] | None):
        self.slot = slot
        self.window = window
        where = f"window [{window[0]},{window[1]})" if window else "no working window"
        super().__init__(
            f"slot [{slot.start},{slot.end}) for {slot.op_id} on {slot.machine_id} "
            f"outside shift: {where}, overdraft {slot.overdraft}"
        )


def insert_slot(plan: Plan, slot: Slot, machine: Machine) -> None:
    """Insert with the full placement contract: free interval, working
    window containing the start, end within window end plus overdraft."""
    window = machine.calendar.window_at(slot.start)
    if window is None or slot.end > window[1] + slot.overdraft:
        raise OutOfShiftError(slot, window)
    plan.insert(slot)


def remove_slot(plan: Plan, op_id: str, part: int | None = None) -> Gap:
    """Remove one slot and report the freed interval (for waiting-pool
    retriggering)."""
    slot = plan.remove(op_id, part)
    return Gap(slot.machine_id, slot.start, slot.end)


def makespan(plan: Plan) -> Duration:
    """Total schedule length: latest end minus earliest start, 0 when empty."""
    slots = plan.slots()
    if not slots:
        return 0
    return max(s.end for s in slots) - min(s.start for s in slots)


def find_gaps(
    plan: Plan,
    machine: Machine,
    window_start: TimeInstant,
    window_end: TimeInstant,
    min_duration: Duration = 1,
    backward: bool = False,
) -> list[Gap]:
    """Maximal free intervals on a machine overlapping the query window.

    Free time is working-calendar time minus existing bookings, including
    their declared overdraft tails. Gaps are clipped to working windows but
    not to the query window; a gap qualifies when its overlap with the query
    window is at least min_duration. Down machines offer no gaps.
    """
    if machine.status is MachineStatus.DOWN:
        return []
    if window_start >= window_end:
        return []
    busy = plan.machine_slots(machine.id)
    gaps: list[Gap] = []
    for ws, we in machine.calendar.windows(window_start, window_end):
        cursor = ws
        for slot in busy:
            if slot.end <= cursor:
                continue
            if slot.start >= we:
                break
            if slot.start > cursor:
                gaps.append(Gap(machine.id, cursor, slot.start))
            cursor = max(cursor, slot.end)
        if cursor < we:
            gaps.append(Gap(machine.id, cursor, we))
    out = [
        g for g in gaps
        if min(g.end, window_end) - max(g.start, window_start) >= min_duration
    ]
    out.sort(key=lambda g: g.start, reverse=backward)
    return out


def validate_plan(
    plan: Plan,
    orders: dict[str, Order],
    machines: dict[str, Machine],
    transit: "TransitFn | None" = None,
    reservations: "ReservationCheck | None" = None,
) -> ValidationReport:
    """Check a plan against the schedule constraints.

    Unresolvable operation or machine references are errors; everything else
    is reported as a violation. ``transit`` maps (machine_a, machine_b) to the
    required transfer minutes between consecutive chain stages; when omitted,
    transfers are instantaneous. ``reservations`` is called per slot to check
    resource bookings.
    """
    errors: list[str] = []
    violations: list[Violation] = []

    op_owner: dict[str, Order] = {}
    for order in orders.values():
        for op in order.operations:
            op_owner[op.id] = order

    for slot in plan.slots():
        if slot.op_id not in op_owner:
            errors.append(f"slot references unknown operation {slot.op_id!r}")
        if slot.machine_id not in machines:
            errors.append(f"slot references unknown machine {slot.machine_id!r}")
    if errors:
        return ValidationReport(tuple(errors), ())

    # machine exclusivity: consecutive slots per machine must not overlap
    for machine_id in plan.machines_used():
        row = plan.machine_slots(machine_id)
        for a, b in zip(row, row[1:]):
            if b.start < a.end:
                violations.append(Violation(
                    "overlap", b.op_id, machine_id,
                    f"[{b.start},{b.end}) overlaps [{a.start},{a.end}) of {a.op_id}",
                ))

    # shift windows: each slot must fit one working window, allowing the
    # declared overdraft tail past the window end
    for slot in plan.slots():
        machine = machines[slot.machine_id]
        window = machine.calendar.window_at(slot.start)
        if window is None:
            violations.append(Violation(
                "shift", slot.op_id, slot.machine_id,
                f"start {slot.start} outside working hours",
            ))
            continue
        allowed_end = window[1] + slot.overdraft
        if slot.end > allowed_end:
            violations.append(Violation(
                "shift", slot.op_id, slot.machine_id,
                f"end {slot.end} past window end {window[1]} "
                f"(+{slot.overdraft} overdraft)",
            ))

    # precedence within each order: every part of a lower stage must finish
    # before any part of a higher stage starts, plus transit when machines
    # differ; chained orders add a cross-order link
    for order in sorted(orders.values(), key=lambda o: o.id):
        stages = order.stages()
        for earlier, later in zip(stages, stages[1:]):
            for op_a in earlier:
                ends = plan.op_slots(op_a.id)
                if not ends:
                    continue
                a_end = max(s.end for s in ends)
                a_machine = max(ends, key=lambda s: s.end).machine_id
                for op_b in later:
                    starts = plan.op_slots(op_b.id)
                    if not starts:
                        continue
                    first = min(starts, key=lambda s: s.start)
                    required = a_end
                    if transit is not None:
                        required += transit(a_machine, first.machine_id)
                    if first.start < required:
                        violations.append(Violation(
                            "precedence", op_b.id, first.machine_id,
                            f"starts {first.start} before {op_a.id} allows {required}",
                        ))
        if order.chain_after and order.chain_after in orders:
            pred = orders[order.chain_after]
            pred_ends = [s.end for op in pred.operations for s in plan.op_slots(op.id)]
            own_starts = [
                (op.id, s) for op in order.operations for s in plan.op_slots(op.id)
            ]
            if pred_ends and own_starts:
                bound = max(pred_ends)
                op_id, first = min(own_starts, key=lambda t: t[1].start)
                if first.start < bound:
                    violations.append(Violation(
                        "precedence", op_id, first.machine_id,
                        f"starts {first.start} before chained order "
                        f"{pred.id} completes at {bound}",
                    ))

    # split parts of one operation must run in part order without overlap
    seen_ops = sorted({s.op_id for s in plan.slots()})
    for op_id in seen_ops:
        parts = plan.op_slots(op_id)
        if len(parts) < 2:
            continue
        ordered = sorted(parts, key=lambda s: (s.part if s.part is not None else 0))
        for a, b in zip(ordered, ordered[1:]):
            if b.start < a.end:
                violations.append(Violation(
                    "precedence", op_id, b.machine_id,
                    f"part {b.part} starts {b.start} before part {a.part} ends {a.end}",
                ))

    if reservations is not None:
        for slot in plan.slots():
            missing = reservations(slot)
            for kind, item in missing:
                violations.append(Violation(
                    "reservation", slot.op_id, slot.machine_id,
                    f"no {kind} reservation for {item!r} over [{slot.start},{slot.end})",
                ))

    return ValidationReport(tuple(errors), tuple(violations))


# typing helpers; kept runtime-light
from typing import Callable  # noqa: E402

TransitFn = Callable[[str, str], Duration]
ReservationCheck = Callable[[Slot], list[tuple[str, str]]]
