"""Domain types for the scheduling engine.

All times are integer minutes from the scenario epoch; schedule arithmetic is
exact (no fractional minutes). Durations are non-negative integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

WEEK_MINUTES = 7 * 24 * 60

TimeInstant = int
Duration = int


class MachineStatus(str, Enum):
    UP = "up"
    DOWN = "down"


class OrderState(str, Enum):
    PENDING = "pending"
    DISPATCHED = "dispatched"
    IN_PROGRESS = "in-progress"
    DONE = "done"
    FAILED = "failed"
    WAITING = "waiting"
    MANUAL = "manual"
    OUTSOURCED = "outsourced"


class Strategy(str, Enum):
    """Dispatch strategy names as they appear in scenario files and the CLI."""

    OPT = "OPT"
    FORCE = "Force"
    X_COMPETITION = "X-Competition"
    WAIT_X = "Wait-X"
    MANUAL = "Manual"


@dataclass(frozen=True)
class CapabilityVector:
    """Graded and binary resource parameters plus supported processes.

    Graded parameters (axis counts, workspace size, accuracy class) carry a
    positive magnitude and can be over-fulfilled; binary parameters are
    present-or-absent and take no part in grading.
    """

    graded: tuple[tuple[str, float], ...] = ()
    binary: frozenset[str] = frozenset()
    processes: frozenset[str] = frozenset()

    def __post_init__(self):
        names = [name for name, _ in self.graded]
        if len(names) != len(set(names)):
            raise ValueError("duplicate graded parameter names")
        for name, value in self.graded:
            if value <= 0:
                raise ValueError(f"graded parameter {name!r} must be > 0")

    @staticmethod
    def build(graded: dict[str, float] | None = None,
              binary: set[str] | frozenset[str] | None = None,
              processes: set[str] | frozenset[str] | None = None) -> "CapabilityVector":
        return CapabilityVector(
            graded=tuple(sorted((graded or {}).items())),
            binary=frozenset(binary or ()),
            processes=frozenset(processes or ()),
        )

    @property
    def graded_map(self) -> dict[str, float]:
        return dict(self.graded)

    def covers(self, requirement: "CapabilityVector") -> bool:
        """True when every binary and graded requirement is satisfied."""
        if not requirement.binary <= self.binary:
            return False
        mine = self.graded_map
        return all(mine.get(name, 0.0) >= value for name, value in requirement.graded)


@dataclass(frozen=True)
class ShiftCalendar:
    """Weekly working windows, repeated over the scenario horizon.

    Windows are half-open [start, end) minute intervals within one week,
    sorted and non-overlapping. Adjacent windows (including across the weekly
    wrap) merge when expanded to absolute time.
    """

    week: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prev_end = 0
        for start, end in self.week:
            if not (0 <= start < end <= WEEK_MINUTES):
                raise ValueError(f"shift window [{start},{end}) outside the week")
            if start < prev_end:
                raise ValueError("shift windows overlap or are unsorted")
            prev_end = end

    @staticmethod
    def always() -> "ShiftCalendar":
        return ShiftCalendar(week=((0, WEEK_MINUTES),))

    @staticmethod
    def daily(start: int, end: int) -> "ShiftCalendar":
        return ShiftCalendar(week=tuple((d * 1440 + start, d * 1440 + end) for d in range(7)))

    def windows(self, start: TimeInstant, end: TimeInstant):
        """Yield absolute working windows intersecting [start, end), merged
        across adjacency so a slot never straddles a window seam."""
        if not self.week or start >= end:
            return
        first_week = max(0, start // WEEK_MINUTES - 1)
        last_week = end // WEEK_MINUTES + 1
        current: tuple[int, int] | None = None
        for week in range(first_week, last_week + 1):
            base = week * WEEK_MINUTES
            for ws, we in self.week:
                a, b = base + ws, base + we
                if current is not None and a == current[1]:
                    current = (current[0], b)
                    continue
                if current is not None:
                    if current[1] > start and current[0] < end:
                        yield current
                    if current[0] >= end:
                        return
                current = (a, b)
        if current is not None and current[1] > start and current[0] < end:
            yield current

    def window_at(self, t: TimeInstant) -> tuple[int, int] | None:
        """The merged working window containing t, if any."""
        for w in self.windows(t, t + 1):
            if w[0] <= t < w[1]:
                return w
        return None

    def open_minutes(self, start: TimeInstant, end: TimeInstant) -> int:
        total = 0
        for ws, we in self.windows(start, end):
            total += min(we, end) - max(ws, start)
        return total


@dataclass
class Machine:
    id: str
    area: str
    capability: CapabilityVector
    calendar: ShiftCalendar
    setup_family: str | None = None
    apt: Duration = 60
    apt_samples: int = 0
    status: MachineStatus = MachineStatus.UP

    def __post_init__(self):
        if self.apt <= 0:
            raise ValueError("average processing time must be > 0")


@dataclass(frozen=True)
class Operation:
    """One step of an order's process chain.

    Operations with equal ``seq`` inside one order are parallel parts (no
    mutual precedence); a lower ``seq`` must complete before any higher one
    starts. ``split_of`` names the original operation when this one was carved
    out of a long-running operation or a manual split.
    """

    id: str
    order_id: str
    seq: int
    process: str
    requirement: CapabilityVector
    duration: Duration
    robustness: Duration = 0
    setup_family: str | None = None
    lots: int = 1
    resources: tuple[tuple[str, str], ...] = ()  # (kind, item) pairs
    alternatives: tuple[str, ...] = ()
    split_of: str | None = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"operation {self.id}: duration must be > 0")
        if self.robustness < 0:
            raise ValueError(f"operation {self.id}: robustness must be >= 0")
        if self.lots < 1:
            raise ValueError(f"operation {self.id}: lot count must be >= 1")
        if self.lots > 1 and self.duration - self.lot_size * (self.lots - 1) < 1:
            raise ValueError(f"operation {self.id}: lot count too high for duration")

    @property
    def lot_size(self) -> int:
        return math.ceil(self.duration / self.lots)

    def lot_boundaries(self) -> list[int]:
        """Offsets (minutes from operation start) at which a transport lot
        completes; the final lot absorbs the rounding remainder."""
        size = self.lot_size
        bounds = [size * i for i in range(1, self.lots)]
        bounds.append(self.duration)
        return bounds

    @property
    def processes(self) -> frozenset[str]:
        return frozenset((self.process, *self.alternatives))

    @property
    def resource_map(self) -> dict[str, str]:
        return dict(self.resources)


@dataclass
class Order:
    id: str
    priority: int
    release: TimeInstant
    due: TimeInstant
    operations: tuple[Operation, ...]
    state: OrderState = OrderState.PENDING
    arrival: TimeInstant | None = None
    chain_after: str | None = None  # order that must complete first (explicit splits)
    failure_reason: str | None = None

    def __post_init__(self):
        if not 1 <= self.priority <= 5:
            raise ValueError(f"order {self.id}: priority must be in 1..5")
        if self.due <= self.release:
            raise ValueError(f"order {self.id}: due must be after release")
        seqs = [op.seq for op in self.operations]
        if seqs != sorted(seqs):
            raise ValueError(f"order {self.id}: operations must be seq-ordered")
        if self.arrival is None:
            self.arrival = self.release

    def stages(self) -> list[list[Operation]]:
        """Operations grouped by chain position; same-seq groups are parallel."""
        out: list[list[Operation]] = []
        for op in self.operations:
            if out and out[-1][0].seq == op.seq:
                out[-1].append(op)
            else:
                out.append([op])
        return out

    def operation(self, op_id: str) -> Operation:
        for op in self.operations:
            if op.id == op_id:
                return op
        raise KeyError(op_id)


@dataclass(frozen=True)
class Slot:
    """A booked interval on one machine for one operation (or one part of a
    shift-split operation). ``overdraft`` declares how many minutes of the
    tail may lie past the shift end."""

    op_id: str
    machine_id: str
    start: TimeInstant
    end: TimeInstant
    frozen: bool = False
    overdraft: Duration = 0
    part: int | None = None

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"slot for {self.op_id}: end must be after start")
        if self.overdraft < 0:
            raise ValueError(f"slot for {self.op_id}: overdraft must be >= 0")

    @property
    def duration(self) -> Duration:
        return self.end - self.start

    @property
    def key(self) -> tuple[str, int]:
        return (self.op_id, -1 if self.part is None else self.part)


def dynamic_priority(base: int, wait_time: Duration, escalation_interval: Duration) -> int:
    """Effective priority of an order after waiting: the base category is
    raised one step per full escalation interval, capped at 5."""
    if escalation_interval <= 0:
        raise ValueError("escalation interval must be > 0")
    if not 1 <= base <= 5:
        raise ValueError("base priority must be in 1..5")
    return min(5, base + max(0, wait_time) // escalation_interval)
