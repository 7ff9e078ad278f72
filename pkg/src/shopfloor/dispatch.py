"""Dispatch strategies and placement options.

Strategies place whole orders: OPT works backward from the due date with the
full five-index score, Force works forward from the release with the reduced
score and falls back through overdraft, shift splitting, and long-runner
splitting. X-Competition treats low-priority bookings as free space, Wait-X
parks orders until capacity frees up, and Manual covers the dispatcher's
hand-placement actions.

All strategy drivers run against a DispatchContext. The agent runtime wires
the context's resource hooks; the defaults grant everything, which is the
standalone one-area shop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

from .indexes import (
    IndexVector,
    WeightConfig,
    machine_index,
    position_index,
    robustness_index,
    setup_index,
    timeslot_index,
    total_index,
)
from .model import (
    Duration,
    Machine,
    MachineStatus,
    Operation,
    Order,
    OrderState,
    Slot,
    TimeInstant,
    dynamic_priority,
)
from .plan import Gap, Plan, find_gaps, validate_plan

DEFAULT_OVERDRAFT_LIMIT = 30
DEFAULT_LONG_SPLIT_X = 1200
DEFAULT_LONG_SPLIT_Y = 300
DEFAULT_ESCALATION_INTERVAL = 480


@dataclass
class DispatchOptions:
    """Option flags steering the Force fallback chain."""

    robustness_enabled: bool = True
    overdraft_allowed: bool = True
    overdraft_limit: Duration = DEFAULT_OVERDRAFT_LIMIT
    overdraft_approved: bool = False  # single-use token minted by an approval
    shift_split_mode: str | None = "a"  # a | b | c, None disables
    shift_split_k: int = 1
    long_split_enabled: bool = True
    long_split_x: Duration = DEFAULT_LONG_SPLIT_X
    long_split_y: Duration = DEFAULT_LONG_SPLIT_Y
    due_strict: bool = False  # reject placements past due (waiting retries)

    def __post_init__(self):
        if self.shift_split_mode not in (None, "a", "b", "c"):
            raise ValueError(f"unknown shift split mode {self.shift_split_mode!r}")
        if self.shift_split_k < 1:
            raise ValueError("shift split lot count must be >= 1")


@dataclass
class DispatchRequest:
    order_id: str
    strategy: str = "Force"
    x_threshold: int | None = None  # X-Competition priority bar
    deadline: TimeInstant | None = None  # Wait-X time limit
    options: DispatchOptions = field(default_factory=DispatchOptions)
    weights: WeightConfig | None = None

    def __post_init__(self):
        if self.strategy == "X-Competition":
            if self.x_threshold is None or not 1 <= self.x_threshold <= 5:
                raise ValueError("X-Competition needs a priority threshold in 1..5")


@dataclass(frozen=True)
class Proposal:
    machine_id: str
    start: TimeInstant
    end: TimeInstant
    vector: IndexVector
    total: float
    victims: tuple[str, ...] = ()
    overdraft: Duration = 0


@dataclass
class DispatchOutcome:
    status: str  # placed | needs-approval | waiting | failed
    slots: tuple[Slot, ...] = ()
    approval_id: str | None = None
    reason: str | None = None
    due_violation: bool = False
    displaced: tuple[str, ...] = ()

    @property
    def placed(self) -> bool:
        return self.status == "placed"


@dataclass(frozen=True)
class WaitingEntry:
    deadline: TimeInstant
    order_id: str
    request: DispatchRequest

    @property
    def sort_key(self):
        return (self.deadline, self.order_id)


class DispatchContext:
    """Mutable dispatch surface: the plan, the fleet, and the resource hooks.

    Hooks left at their defaults grant every reservation, book nothing, and
    treat the whole fleet as one organizational scope.
    """

    def __init__(
        self,
        plan: Plan,
        machines: dict[str, Machine],
        orders: dict[str, Order],
        *,
        now: TimeInstant = 0,
        horizon: TimeInstant = 8 * 7 * 24 * 60,
        weights: WeightConfig | None = None,
        escalation_interval: Duration = DEFAULT_ESCALATION_INTERVAL,
    ):
        self.plan = plan
        self.machines = machines
        self.orders = orders
        self.now = now
        self.horizon = horizon
        self.weights = weights or WeightConfig()
        self.escalation_interval = escalation_interval
        self.waiting: list[WaitingEntry] = []
        self.events: list[tuple[str, dict]] = []
        self._approval_seq = 0
        self.quiet = False  # exploratory passes leave no event or message trail
        # hooks, overridden by the agent runtime
        self.feasible: Callable[[Operation, str, int, int], bool] = lambda op, m, s, e: True
        self.book: Callable[[Operation, list[Slot]], bool] = lambda op, slots: True
        self.unbook: Callable[[str], None] = lambda op_id: None
        self.transit: Callable[[str, str], Duration] = lambda a, b: 0
        self.ready_at: Callable[[Operation, str, TimeInstant], TimeInstant] = (
            lambda op, m, t: t
        )
        self.scopes: Callable[[Order], list[frozenset[str]]] = (
            lambda order: [frozenset(self.machines)]
        )
        self.on_event: Callable[[str, dict], None] | None = None

    def emit(self, kind: str, payload: dict) -> str | None:
        """Record an event; approval kinds mint and return a request id."""
        if self.quiet:
            return None
        approval_id = None
        if kind == "approval-emitted":
            self._approval_seq += 1
            approval_id = f"apv-{self._approval_seq}"
            payload = {**payload, "approval_id": approval_id}
        self.events.append((kind, payload))
        if self.on_event is not None:
            self.on_event(kind, payload)
        return approval_id

    def snapshot(self):
        return (
            self.plan.clone(),
            {oid: (o.operations, o.state) for oid, o in self.orders.items()},
            list(self.waiting),
        )

    def rollback(self, token) -> None:
        plan, order_state, waiting = token
        self.plan.restore_from(plan)
        for oid, (ops, state) in order_state.items():
            if oid in self.orders:
                self.orders[oid].operations = ops
                self.orders[oid].state = state
        self.waiting[:] = waiting

    def priority_of(self, order: Order) -> int:
        arrival = order.arrival if order.arrival is not None else order.release
        return dynamic_priority(order.priority, max(0, self.now - arrival), self.escalation_interval)


# -- machine filtering -------------------------------------------------------

def filter_machines(
    operation: Operation,
    machines: dict[str, Machine],
    scope: frozenset[str] | set[str] | None = None,
    *,
    include_down: bool = False,
) -> list[Machine]:
    """Machines in scope that can run the operation at all: process offered,
    binary parameters present, graded parameters at least met, machine up.
    Ordered by machine id for stable downstream tie-breaks. include_down
    keeps machines that are merely out of service right now, for structural
    questions like area assignment."""
    out = []
    for mid in sorted(machines):
        if scope is not None and mid not in scope:
            continue
        m = machines[mid]
        if m.status is not MachineStatus.UP and not include_down:
            continue
        if not (operation.processes & m.capability.processes):
            continue
        if not m.capability.covers(operation.requirement):
            continue
        out.append(m)
    return out


# -- the overdraft gate -------------------------------------------------------

def apply_overdraft(
    excess: Duration,
    priority: int,
    limit: Duration = DEFAULT_OVERDRAFT_LIMIT,
) -> str:
    """Gate for running past a shift end: 'allowed', 'needs-approval', or
    'denied'. Only the two highest priorities may use the option at all, and
    only below the configured excess limit."""
    if excess >= limit:
        return "denied"
    if priority == 5:
        return "allowed"
    if priority == 4:
        return "needs-approval"
    return "denied"


# -- splitting rules ----------------------------------------------------------

def split_cut(operation: Operation, free: Duration, mode: str, k: int = 1) -> Duration | None:
    """Minutes of the first part when cutting an operation that does not fit
    the free time before a shift end. None when the mode admits no cut."""
    if free <= 0 or free >= operation.duration:
        return None
    if mode == "a":
        return free
    boundaries = [b for b in operation.lot_boundaries() if b < operation.duration]
    if mode == "b":
        fitting = [b for b in boundaries if b <= free]
        return max(fitting) if fitting else None
    if mode == "c":
        if k >= operation.lots:
            return None
        cut = operation.lot_size * k
        return cut if cut <= free else None
    raise ValueError(f"unknown shift split mode {mode!r}")


def split_long_runner(
    operation: Operation,
    x_threshold: Duration = DEFAULT_LONG_SPLIT_X,
    y_min_part: Duration = DEFAULT_LONG_SPLIT_Y,
) -> tuple[Operation, ...]:
    """Split an operation whose duration strictly exceeds the x threshold
    into equal parts (remainder to the last), each between y and 2y minutes.

    Parts share the parent's chain position and carry no mutual precedence,
    so they may run side by side on different machines. An operation over
    the threshold but shorter than two minimum parts is returned unchanged.
    """
    d = operation.duration
    if d <= x_threshold or d < 2 * y_min_part:
        return (operation,)
    parts = math.ceil(d / (2 * y_min_part))
    base = d // parts
    durations = [base] * (parts - 1) + [d - base * (parts - 1)]
    return tuple(
        replace(operation, id=f"{operation.id}/p{i}", duration=dur, lots=1,
                split_of=operation.id)
        for i, dur in enumerate(durations)
    )


# -- proposal generation ------------------------------------------------------

def _setup_neighbor(plan: Plan, machine_id: str, start: TimeInstant) -> tuple[str | None, Duration]:
    """Nearest slot ending at or before the placement start, and the idle
    time separating them."""
    best = None
    for slot in plan.machine_slots(machine_id):
        if slot.end <= start:
            best = slot
        else:
            break
    if best is None:
        return None, 0
    return best.op_id, start - best.end


def _op_families(orders: dict[str, Order]) -> dict[str, str | None]:
    out: dict[str, str | None] = {}
    for order in orders.values():
        for op in order.operations:
            out[op.id] = op.setup_family
    return out


def _score_placement(
    op: Operation,
    order: Order,
    machine: Machine,
    gap: Gap,
    start: TimeInstant,
    end: TimeInstant,
    *,
    strategy: str,
    weights: WeightConfig,
    neighbor_plan: Plan,
    op_families: dict[str, str | None],
    backward: bool,
    overdraft: Duration = 0,
) -> tuple[Proposal, bool]:
    """Build a scored proposal for one concrete placement. Returns the
    proposal and whether it violates the order's due window."""
    active = weights.active_components(strategy)
    due_violation = end > order.due or start < order.release
    parts: dict[str, float] = {}
    if "machine" in active:
        parts["machine"] = machine_index(op.requirement, machine.capability)
    if "robustness" in active:
        if overdraft:
            usable = op.duration  # the tail is borrowed time, no reserve behind it
        else:
            usable = (end - gap.start) if backward else (gap.end - start)
        parts["robustness"] = robustness_index(usable, op.duration, op.robustness)
    if "position" in active:
        remainder = 0 if overdraft else ((start - gap.start) if backward else (gap.end - end))
        parts["position"] = position_index(remainder, machine.apt)
    if "setup" in active:
        neighbor_op, idle = _setup_neighbor(neighbor_plan, machine.id, start)
        family = op_families.get(neighbor_op) if neighbor_op else None
        parts["setup"] = setup_index(op.setup_family, family, idle, machine.apt)
    if "timeslot" in active:
        if due_violation:
            parts["timeslot"] = 0.0
        else:
            parts["timeslot"] = timeslot_index(start, end, order.release, order.due, backward)
    vector = IndexVector(**parts)
    proposal = Proposal(
        machine.id, start, end, vector, total_index(vector, weights), overdraft=overdraft,
    )
    return proposal, due_violation


def _candidate_placements(
    op: Operation,
    machine: Machine,
    plan: Plan,
    window_start: TimeInstant,
    window_end: TimeInstant,
    *,
    backward: bool,
):
    """Anchored placement per gap: latest end when backward, earliest start
    when forward. Yields (gap, start, end)."""
    for gap in find_gaps(plan, machine, window_start, window_end, op.duration, backward=backward):
        if backward:
            end = min(gap.end, window_end)
            start = end - op.duration
            if start < max(gap.start, window_start):
                continue
        else:
            start = max(gap.start, window_start)
            end = start + op.duration
            if end > gap.end or end > window_end:
                continue
        yield gap, start, end


def _machine_best(
    ctx: DispatchContext,
    op: Operation,
    order: Order,
    machine: Machine,
    window_start: TimeInstant,
    window_end: TimeInstant,
    *,
    strategy: str,
    weights: WeightConfig,
    backward: bool,
    search_plan: Plan | None = None,
) -> tuple[Proposal, bool] | None:
    """One machine's best placement across its gaps. Tie-break: higher total,
    then later start (backward) or earlier start (forward)."""
    plan = search_plan if search_plan is not None else ctx.plan
    families = _op_families(ctx.orders)
    best: tuple | None = None
    for gap, start, end in _candidate_placements(
        op, machine, plan, window_start, window_end, backward=backward,
    ):
        if not ctx.feasible(op, machine.id, start, end):
            continue
        proposal, violates = _score_placement(
            op, order, machine, gap, start, end,
            strategy=strategy, weights=weights, neighbor_plan=plan,
            op_families=families, backward=backward,
        )
        rank = (-proposal.total, -start if backward else start)
        if best is None or rank < best[0]:
            best = (rank, proposal, violates)
    if best is None:
        return None
    return best[1], best[2]


def machine_proposal(
    ctx: DispatchContext, op: Operation, order: Order, machine: Machine,
    *, strategy: str = "OPT", weights: WeightConfig | None = None,
    window_end: TimeInstant | None = None,
) -> Proposal | None:
    """Best placement one machine can offer for one operation, forward from
    the release and behind any placed predecessors. The per-machine
    negotiation primitive; None means the machine declines. window_end caps
    the completion so a caller can insist on the due date."""
    stages = order.stages()
    stage_index = next(
        i for i, stage in enumerate(stages) if any(o.id == op.id for o in stage)
    )
    placed = {
        o.id: ctx.plan.op_slots(o.id)
        for o in order.operations if ctx.plan.op_slots(o.id)
    }
    w_start = _window_start_forward(ctx, op, order, stage_index, machine.id, placed)
    w_end = ctx.horizon if window_end is None else min(window_end, ctx.horizon)
    got = _machine_best(
        ctx, op, order, machine, w_start, w_end,
        strategy=strategy, weights=weights or ctx.weights, backward=False,
    )
    return got[0] if got is not None else None


# -- window arithmetic for chained operations ---------------------------------

def _window_end_backward(
    ctx: DispatchContext, order: Order, stage_index: int, machine_id: str,
    placed: dict[str, list[Slot]],
) -> TimeInstant:
    """Latest allowed end on a machine: the due date, tightened to the
    earliest successor start minus the transit lag to reach it."""
    stages = order.stages()
    bound = order.due
    if stage_index + 1 < len(stages):
        for succ in stages[stage_index + 1]:
            for slot in placed.get(succ.id, ()):
                bound = min(bound, slot.start - ctx.transit(machine_id, slot.machine_id))
    return bound


def _window_start_forward(
    ctx: DispatchContext, op: Operation, order: Order, stage_index: int,
    machine_id: str, placed: dict[str, list[Slot]],
) -> TimeInstant:
    """Earliest allowed start on a machine: release and clock, pushed by the
    latest predecessor end plus the transit lag from its machine."""
    stages = order.stages()
    bound = max(order.release, ctx.now)
    if order.chain_after and order.chain_after in ctx.orders:
        for chained in ctx.orders[order.chain_after].operations:
            for slot in ctx.plan.op_slots(chained.id):
                bound = max(bound, slot.end)
    if stage_index > 0:
        for pred in stages[stage_index - 1]:
            for slot in placed.get(pred.id, ()):
                bound = max(bound, slot.end + ctx.transit(slot.machine_id, machine_id))
    # transport capacity can push the start past the bare transit lag
    return max(bound, ctx.ready_at(op, machine_id, bound))


def _award(ctx: DispatchContext, op: Operation, slots: list[Slot]) -> bool:
    """Insert slots and book their resources; on a decline nothing is left
    behind."""
    inserted = []
    try:
        for slot in slots:
            ctx.plan.insert(slot)
            inserted.append(slot)
    except ValueError:
        for slot in inserted:
            ctx.plan.remove(slot.op_id, slot.part)
        return False
    if not ctx.book(op, slots):
        for slot in inserted:
            ctx.plan.remove(slot.op_id, slot.part)
        return False
    return True


def _release_all(ctx: DispatchContext, slots: list[Slot]) -> None:
    for op_id in {s.op_id for s in slots}:
        ctx.unbook(op_id)


# -- OPT: backward dispatch with the full index set ---------------------------

def dispatch_opt(
    order: Order, ctx: DispatchContext, request: DispatchRequest | None = None,
) -> DispatchOutcome:
    """Place the chain in reverse, each operation as late as feasible before
    its successor, scored with all five indexes. All-or-nothing: one
    unplaceable operation fails the order and rolls everything back."""
    request = request or DispatchRequest(order.id, strategy="OPT")
    weights = request.weights or ctx.weights
    token = ctx.snapshot()
    placed: dict[str, list[Slot]] = {}
    all_slots: list[Slot] = []
    floor = max(order.release, ctx.now)
    stages = order.stages()
    scopes = ctx.scopes(order)
    for stage_index in range(len(stages) - 1, -1, -1):
        for op in stages[stage_index]:
            chosen: Proposal | None = None
            for level, scope in enumerate(scopes):
                ranked: list[tuple] = []
                for machine in filter_machines(op, ctx.machines, scope):
                    w_end = _window_end_backward(ctx, order, stage_index, machine.id, placed)
                    got = _machine_best(
                        ctx, op, order, machine, floor, w_end,
                        strategy="OPT", weights=weights, backward=True,
                    )
                    if got is not None:
                        ranked.append((-got[0].total, -got[0].start, machine.id, got[0]))
                if ranked:
                    ranked.sort()
                    chosen = ranked[0][3]
                    break
                if level + 1 < len(scopes):
                    ctx.emit("escalation", {
                        "order": order.id, "operation": op.id, "to_level": level,
                    })
            if chosen is None or not _award(ctx, op, [Slot(op.id, chosen.machine_id, chosen.start, chosen.end)]):
                _release_all(ctx, all_slots)
                ctx.rollback(token)
                return DispatchOutcome("failed", reason=f"no feasible placement for {op.id}")
            slot = ctx.plan.get(op.id)
            placed.setdefault(op.id, []).append(slot)
            all_slots.append(slot)
    order.state = OrderState.DISPATCHED
    return DispatchOutcome("placed", slots=tuple(all_slots))


# -- Force: forward dispatch with the fallback chain --------------------------

@dataclass
class _StepResult:
    status: str  # placed | needs-approval | long-split | failed
    slots: tuple[Slot, ...] = ()
    excess: Duration = 0
    due_violation: bool = False


def _try_overdraft(
    ctx: DispatchContext, op: Operation, order: Order, candidates: list[Machine],
    window_starts: dict[str, TimeInstant], options: DispatchOptions,
    cap: TimeInstant,
) -> tuple[str, Slot | None]:
    """Earliest-finishing shift-end gap the operation only just misses,
    gated by priority. Returns the gate ruling and the candidate slot."""
    priority = ctx.priority_of(order)
    ranked: list[tuple] = []
    for machine in candidates:
        w_start = window_starts[machine.id]
        for gap in find_gaps(ctx.plan, machine, w_start, ctx.horizon, 1):
            window = machine.calendar.window_at(gap.end - 1)
            if window is None or gap.end != window[1]:
                continue  # gap is booking-bounded, not a shift end
            start = max(gap.start, w_start)
            end = start + op.duration
            excess = op.duration - (gap.end - start)
            if excess <= 0:
                continue
            if end > cap:
                break  # later shift ends only finish later
            gate = apply_overdraft(excess, priority, options.overdraft_limit)
            if options.overdraft_approved and gate == "needs-approval":
                gate = "allowed"
            if gate == "denied":
                continue
            if not ctx.feasible(op, machine.id, start, end):
                continue
            ranked.append((end, machine.id, gate, Slot(op.id, machine.id, start, end, overdraft=excess)))
            break  # later shift ends on this machine finish later
    if not ranked:
        return "denied", None
    ranked.sort()
    _, _, gate, slot = ranked[0]
    return gate, slot


def _next_free_run(ctx: DispatchContext, machine: Machine, after: TimeInstant) -> tuple[int, int] | None:
    """Earliest free interval at or after a point, clipped to one working
    window."""
    for gap in find_gaps(ctx.plan, machine, after, ctx.horizon, 1):
        start = max(gap.start, after)
        if gap.end - start >= 1:
            return start, gap.end
    return None


def _shift_split_on(
    ctx: DispatchContext, op: Operation, machine: Machine,
    window_start: TimeInstant, options: DispatchOptions,
) -> list[Slot] | None:
    """Cut the operation at a shift end on one machine and continue in later
    windows there. Mode a may keep cutting; modes b and c make one cut and
    need a contiguous run for the remainder."""
    mode, k = options.shift_split_mode, options.shift_split_k
    for gap in find_gaps(ctx.plan, machine, window_start, ctx.horizon, 1):
        window = machine.calendar.window_at(gap.end - 1)
        if window is None or gap.end != window[1]:
            continue
        start = max(gap.start, window_start)
        cut = split_cut(op, gap.end - start, mode, k)
        if cut is None:
            continue
        if not ctx.feasible(op, machine.id, start, start + cut):
            continue
        parts = [Slot(op.id, machine.id, start, start + cut, part=0)]
        remainder = op.duration - cut
        cursor = gap.end
        while remainder > 0:
            if cursor >= ctx.horizon:
                return None
            run = _next_free_run(ctx, machine, cursor)
            if run is None:
                return None
            run_start, run_end = run
            take = min(remainder, run_end - run_start) if mode == "a" else remainder
            if take > run_end - run_start or not ctx.feasible(op, machine.id, run_start, run_start + take):
                cursor = run_end
                continue
            parts.append(Slot(op.id, machine.id, run_start, run_start + take, part=len(parts)))
            remainder -= take
            cursor = run_end
        return parts
    return None


def _place_forward(
    ctx: DispatchContext, op: Operation, order: Order, stage_index: int,
    placed: dict[str, list[Slot]], options: DispatchOptions,
    weights: WeightConfig, strategy_label: str, search_plan: Plan | None,
) -> _StepResult:
    """One operation through the forward pipeline.

    Each organizational level is first asked for a placement that meets the
    due date; a level that cannot deliver on time escalates to the next. Only
    after every level failed does the search rerun on the widest scope with
    the due cap lifted, and long-runner splitting qualifies last of all.
    """
    scopes = ctx.scopes(order)
    due_cap = min(ctx.horizon, order.due)
    for level, scope in enumerate(scopes):
        result = _attempt_level(
            ctx, op, order, stage_index, placed, options, weights,
            strategy_label, search_plan, scope, due_cap,
        )
        if result is not None:
            return result
        if level + 1 < len(scopes):
            ctx.emit("escalation", {"order": order.id, "operation": op.id, "to_level": level})
    if not options.due_strict and due_cap < ctx.horizon:
        result = _attempt_level(
            ctx, op, order, stage_index, placed, options, weights,
            strategy_label, search_plan, scopes[-1], ctx.horizon,
        )
        if result is not None:
            return result
    if (
        search_plan is None
        and options.long_split_enabled
        and op.split_of is None
        and op.duration > options.long_split_x
        and op.duration >= 2 * options.long_split_y
    ):
        return _StepResult("long-split")
    return _StepResult("failed")


def _attempt_level(
    ctx: DispatchContext, op: Operation, order: Order, stage_index: int,
    placed: dict[str, list[Slot]], options: DispatchOptions,
    weights: WeightConfig, strategy_label: str, search_plan: Plan | None,
    scope: frozenset[str], cap: TimeInstant,
) -> _StepResult | None:
    """One scope level, all placements ending by the cap. The regular option
    competes with overdraft and shift splitting on completion time: borrowing
    a few minutes past today's shift end beats starting tomorrow. On a tie
    the chain order regular, overdraft, split decides. Returns None when the
    level has nothing to offer."""
    candidates = filter_machines(op, ctx.machines, scope)
    if not candidates:
        return None
    window_starts = {
        m.id: _window_start_forward(ctx, op, order, stage_index, m.id, placed)
        for m in candidates
    }
    # regular contiguous placement, best score first
    regular: list[tuple] = []
    for machine in candidates:
        got = _machine_best(
            ctx, op, order, machine, window_starts[machine.id], cap,
            strategy=strategy_label, weights=weights, backward=False,
            search_plan=search_plan,
        )
        if got is not None:
            regular.append((-got[0].total, got[0].start, machine.id, got[0], got[1]))
    regular.sort()
    over_gate, over_slot = "denied", None
    split_parts: list[Slot] | None = None
    if search_plan is None and options.overdraft_allowed:
        over_gate, over_slot = _try_overdraft(
            ctx, op, order, candidates, window_starts, options, cap,
        )
    if search_plan is None and options.shift_split_mode is not None:
        for machine in candidates:
            parts = _shift_split_on(ctx, op, machine, window_starts[machine.id], options)
            if parts is None or parts[-1].end > cap:
                continue
            if split_parts is None or (parts[-1].end, machine.id) < (
                    split_parts[-1].end, split_parts[-1].machine_id):
                split_parts = parts

    # classes compete on completion time; ties follow the chain order
    entries: list[tuple] = []
    if regular:
        entries.append((regular[0][3].end, 0, "regular"))
    if over_slot is not None:
        entries.append((over_slot.end, 1, "overdraft"))
    if split_parts is not None:
        entries.append((split_parts[-1].end, 2, "split"))
    entries.sort()
    for _, _, kind in entries:
        if kind == "regular":
            for _, _, _, proposal, violates in regular:
                slot = Slot(op.id, proposal.machine_id, proposal.start, proposal.end)
                if search_plan is not None:
                    search_plan.insert(slot)
                    return _StepResult("placed", (slot,), due_violation=violates)
                if _award(ctx, op, [slot]):
                    return _StepResult("placed", (slot,), due_violation=violates)
        elif kind == "overdraft":
            if over_gate == "needs-approval":
                return _StepResult("needs-approval", excess=over_slot.overdraft)
            if over_gate == "allowed" and _award(ctx, op, [over_slot]):
                if options.overdraft_approved:
                    options.overdraft_approved = False  # token is single-use
                return _StepResult(
                    "placed", (over_slot,),
                    due_violation=over_slot.end > order.due,
                )
        elif kind == "split":
            if _award(ctx, op, split_parts):
                return _StepResult(
                    "placed", tuple(split_parts),
                    due_violation=split_parts[-1].end > order.due,
                )
    return None


def dispatch_force(
    order: Order, ctx: DispatchContext, request: DispatchRequest | None = None,
    *,
    _strategy_label: str = "Force",
    _search_plan: Plan | None = None,
) -> DispatchOutcome:
    """Place the chain forward, each operation as early as feasible, with the
    reduced robustness/timeslot score and the overdraft, shift-splitting,
    escalation and long-runner fallbacks."""
    request = request or DispatchRequest(order.id, strategy="Force")
    options = request.options
    weights = request.weights or ctx.weights
    token = ctx.snapshot()
    placed: dict[str, list[Slot]] = {}
    all_slots: list[Slot] = []
    due_violation = False

    def fail(reason: str) -> DispatchOutcome:
        _release_all(ctx, all_slots)
        ctx.rollback(token)
        return DispatchOutcome("failed", reason=reason)

    stage_cursor = 0
    while stage_cursor < len(order.stages()):
        restart_stage = False
        for op in order.stages()[stage_cursor]:
            if op.id in placed:
                continue
            result = _place_forward(
                ctx, op, order, stage_cursor, placed, options, weights,
                _strategy_label, _search_plan,
            )
            if result.status == "placed":
                placed[op.id] = list(result.slots)
                all_slots.extend(result.slots)
                due_violation = due_violation or result.due_violation
                continue
            if result.status == "needs-approval":
                _release_all(ctx, all_slots)
                ctx.rollback(token)
                approval_id = ctx.emit("approval-emitted", {
                    "kind": "overdraft", "order": order.id,
                    "operation": op.id, "excess": result.excess,
                })
                order.state = OrderState.WAITING
                return DispatchOutcome("needs-approval", approval_id=approval_id)
            if result.status == "long-split":
                parts = split_long_runner(op, options.long_split_x, options.long_split_y)
                order.operations = tuple(
                    part for existing in order.operations
                    for part in (parts if existing.id == op.id else (existing,))
                )
                restart_stage = True
                break
            return fail(f"no feasible placement for {op.id}")
        if not restart_stage:
            stage_cursor += 1

    order.state = OrderState.DISPATCHED
    return DispatchOutcome("placed", slots=tuple(all_slots), due_violation=due_violation)


# -- X-Competition -------------------------------------------------------------

def dispatch_x_competition(
    order: Order, ctx: DispatchContext, request: DispatchRequest,
) -> DispatchOutcome:
    """Force dispatch that treats bookings of orders with dynamic priority
    below X as free space. Overrun victims are re-dispatched with plain Force
    right away; victims with no room join the waiting pool."""
    x = request.x_threshold
    assert x is not None
    token = ctx.snapshot()

    victim_ops = _displaceable_ops(ctx, x, exclude_order=order.id)
    shadow = ctx.plan.clone()
    for op_id in victim_ops:
        shadow.remove_op(op_id)

    outcome = dispatch_force(
        order, ctx,
        DispatchRequest(order.id, strategy="X-Competition", x_threshold=x,
                        options=request.options, weights=request.weights),
        _strategy_label="X-Competition", _search_plan=shadow,
    )
    if outcome.status != "placed":
        # no win even with every victim cleared away; plain placement still
        # has the overdraft, splitting and long-runner options
        return dispatch_force(
            order, ctx,
            DispatchRequest(order.id, strategy="Force", options=request.options,
                            weights=request.weights),
            _strategy_label="X-Competition",
        )

    # displace exactly the victims the winning slots ran over
    displaced: list[str] = []
    for slot in outcome.slots:
        for victim_id in victim_ops:
            if victim_id in displaced:
                continue
            for vslot in ctx.plan.op_slots(victim_id):
                if (vslot.machine_id == slot.machine_id
                        and vslot.start < slot.end and slot.start < vslot.end):
                    displaced.append(victim_id)
                    break
    for victim_id in displaced:
        ctx.plan.remove_op(victim_id)
        ctx.unbook(victim_id)

    op_index = {o.id: o for o in order.operations}
    by_op: dict[str, list[Slot]] = {}
    for slot in outcome.slots:
        by_op.setdefault(slot.op_id, []).append(slot)
    for op_id, slots in by_op.items():
        ok = True
        try:
            for slot in slots:
                ctx.plan.insert(slot)
        except ValueError:
            ok = False
        if ok:
            ok = ctx.book(op_index[op_id], slots)
        if not ok:
            _release_all(ctx, outcome.slots)
            ctx.rollback(token)
            return DispatchOutcome("failed", reason="displacement conflict")

    seen: set[str] = set()
    for victim_id in displaced:
        if victim_id in seen:
            _release_all(ctx, outcome.slots)
            ctx.rollback(token)
            return DispatchOutcome("failed", reason=f"displacement loop on {victim_id}")
        seen.add(victim_id)
        victim_order = _owner_of(ctx, victim_id)
        if victim_order is not None:
            _redispatch_victim(ctx, victim_order, victim_id, request)

    order.state = OrderState.DISPATCHED
    return DispatchOutcome(
        "placed", slots=outcome.slots, displaced=tuple(displaced),
        due_violation=outcome.due_violation,
    )


def _displaceable_ops(ctx: DispatchContext, x: int, exclude_order: str) -> list[str]:
    """Operations whose slots X-Competition may treat as free: not frozen,
    not running, owner's dynamic priority under the bar."""
    out: list[str] = []
    for slot in ctx.plan.slots():
        if slot.frozen or slot.op_id in out:
            continue
        owner = _owner_of(ctx, slot.op_id)
        if owner is None or owner.id == exclude_order:
            continue
        if owner.state is OrderState.IN_PROGRESS:
            continue
        if ctx.priority_of(owner) < x:
            out.append(slot.op_id)
    return out


def _owner_of(ctx: DispatchContext, op_id: str) -> Order | None:
    root = op_id.split("/p")[0]
    for order in ctx.orders.values():
        for op in order.operations:
            if op.id == op_id or op.id == root:
                return order
    return None


def redispatch_operation(
    ctx: DispatchContext, order: Order, op_id: str,
    *, strategy: str = "Force", weights: WeightConfig | None = None,
) -> bool:
    """Re-place one operation of a partly placed order between its placed
    neighbors, searching the order's widest scope. No waiting-pool fallback:
    False means no machine would take it."""
    try:
        op = order.operation(op_id)
    except KeyError:
        return False
    stages = order.stages()
    stage_index = next(
        i for i, stage in enumerate(stages) if any(o.id == op_id for o in stage)
    )
    neighbors: dict[str, list[Slot]] = {}
    for other in order.operations:
        slots = ctx.plan.op_slots(other.id)
        if slots:
            neighbors[other.id] = slots

    ranked: list[tuple] = []
    scope = ctx.scopes(order)[-1]
    for machine in filter_machines(op, ctx.machines, scope):
        w_start = _window_start_forward(ctx, op, order, stage_index, machine.id, neighbors)
        w_end = min(_window_end_backward(ctx, order, stage_index, machine.id, neighbors),
                    ctx.horizon)
        got = _machine_best(
            ctx, op, order, machine, w_start, w_end,
            strategy=strategy, weights=weights or ctx.weights, backward=False,
        )
        if got is not None:
            ranked.append((got[0].start, machine.id, got[0]))
    for _, machine_id, proposal in sorted(ranked, key=lambda r: r[:2]):
        if _award(ctx, op, [Slot(op_id, machine_id, proposal.start, proposal.end)]):
            return True
    return False


def _redispatch_victim(
    ctx: DispatchContext, victim_order: Order, op_id: str, request: DispatchRequest,
) -> str:
    """Re-place one displaced operation with plain Force between its placed
    neighbors. Returns placed | waiting."""
    if redispatch_operation(ctx, victim_order, op_id,
                            strategy="Force", weights=request.weights):
        return "placed"
    deadline = max(victim_order.due, ctx.now + ctx.escalation_interval)
    enqueue_wait_x(victim_order, deadline, ctx,
                   request=DispatchRequest(victim_order.id, strategy="Force"))
    return "waiting"


# -- Wait-X ---------------------------------------------------------------------

def enqueue_wait_x(
    order: Order, deadline: TimeInstant, ctx: DispatchContext,
    request: DispatchRequest | None = None,
) -> DispatchOutcome:
    """Park an order in the waiting pool until capacity frees up or the
    deadline passes."""
    request = request or DispatchRequest(order.id, strategy="Wait-X", deadline=deadline)
    if not any(e.order_id == order.id for e in ctx.waiting):
        ctx.waiting.append(WaitingEntry(deadline, order.id, request))
        ctx.waiting.sort(key=lambda e: e.sort_key)
    order.state = OrderState.WAITING
    return DispatchOutcome("waiting", reason=f"waiting until {deadline}")


def retry_waiting(ctx: DispatchContext, trigger: str = "capacity-freed") -> list[tuple[str, DispatchOutcome]]:
    """Give every waiting order another Force attempt, earliest deadline
    first. Placed orders leave the pool; the rest keep waiting."""
    results: list[tuple[str, DispatchOutcome]] = []
    for entry in sorted(ctx.waiting, key=lambda e: e.sort_key):
        order = ctx.orders.get(entry.order_id)
        if order is None or order.state is not OrderState.WAITING:
            if entry in ctx.waiting:
                ctx.waiting.remove(entry)
            continue
        outcome = dispatch_force(order, ctx, DispatchRequest(
            order.id, strategy="Force", options=entry.request.options,
            weights=entry.request.weights,
        ))
        if outcome.placed:
            ctx.waiting.remove(entry)
            results.append((order.id, outcome))
        else:
            order.state = OrderState.WAITING
    return results


def expire_waiting(ctx: DispatchContext, now: TimeInstant) -> list[str]:
    """Time out overdue waiting orders: each gets a pending approval and the
    failed-waiting state. Returns the approval ids."""
    out = []
    for entry in list(ctx.waiting):
        if entry.deadline <= now:
            ctx.waiting.remove(entry)
            order = ctx.orders.get(entry.order_id)
            if order is None:
                continue
            approval_id = ctx.emit("approval-emitted", {
                "kind": "wait-x-timeout", "order": order.id, "deadline": entry.deadline,
            })
            order.state = OrderState.FAILED
            order.failure_reason = "wait-x-timeout"
            out.append(approval_id)
    return out


# -- Manual actions ---------------------------------------------------------------

def manual_explicit_split(order: Order, n: int, ctx: DispatchContext) -> list[Order]:
    """Split an order into n chained sibling orders along stage boundaries,
    as evenly as the chain allows. The original keeps its id and becomes the
    first sibling; all of them queue for manual dispatch."""
    stages = order.stages()
    if n < 2 or n > len(stages):
        raise ValueError(f"cannot split {len(stages)} chain stages into {n} orders")
    base, extra = divmod(len(stages), n)
    sizes = [base + (1 if i < extra else 0) for i in range(n)]

    for op in order.operations:
        if op.id in ctx.plan:
            ctx.plan.remove_op(op.id)
            ctx.unbook(op.id)

    groups: list[list[Operation]] = []
    cursor = 0
    for size in sizes:
        groups.append([op for stage in stages[cursor:cursor + size] for op in stage])
        cursor += size

    siblings: list[Order] = []
    previous = order.id
    for i, group in enumerate(groups):
        if i == 0:
            order.operations = tuple(group)
            order.state = OrderState.MANUAL
            siblings.append(order)
            continue
        child = Order(
            id=f"{order.id}/s{i}", priority=order.priority,
            release=order.release, due=order.due,
            operations=tuple(group), state=OrderState.MANUAL,
            arrival=order.arrival, chain_after=previous,
        )
        ctx.orders[child.id] = child
        siblings.append(child)
        previous = child.id
    ctx.emit("manual-action", {"action": "explicit-split", "order": order.id, "parts": n})
    return siblings


def manual_split_placement(
    order: Order, op_id: str, pieces: list[tuple[str, int, int]], ctx: DispatchContext,
) -> DispatchOutcome:
    """Place one operation exactly where the dispatcher said, as parts over
    the given (machine, start, end) intervals. The pieces must add up to the
    operation's duration and hold every plan constraint."""
    try:
        op = order.operation(op_id)
    except KeyError:
        return DispatchOutcome("failed", reason=f"unknown operation {op_id!r}")
    total = sum(end - start for _, start, end in pieces)
    if total != op.duration:
        return DispatchOutcome("failed", reason=f"pieces cover {total} of {op.duration} minutes")
    ordered = sorted(pieces, key=lambda p: (p[1], p[0]))
    slots = []
    for i, (machine_id, start, end) in enumerate(ordered):
        if machine_id not in ctx.machines:
            return DispatchOutcome("failed", reason=f"unknown machine {machine_id!r}")
        slots.append(Slot(op_id, machine_id, start, end, part=i if len(ordered) > 1 else None))
    token = ctx.snapshot()
    try:
        for slot in slots:
            window = ctx.machines[slot.machine_id].calendar.window_at(slot.start)
            if window is None or slot.end > window[1]:
                raise ValueError(f"piece [{slot.start},{slot.end}) leaves working hours")
            ctx.plan.insert(slot)
    except ValueError as exc:
        ctx.rollback(token)
        return DispatchOutcome("failed", reason=str(exc))
    report = validate_plan(ctx.plan, ctx.orders, ctx.machines, transit=ctx.transit)
    if not report.ok:
        ctx.rollback(token)
        detail = "; ".join(v.detail for v in report.violations) or "; ".join(report.errors)
        return DispatchOutcome("failed", reason=detail)
    if not ctx.book(op, slots):
        ctx.rollback(token)
        return DispatchOutcome("failed", reason="resource booking declined")
    ctx.emit("manual-action", {"action": "manual-split", "order": order.id, "operation": op_id})
    order.state = OrderState.DISPATCHED
    return DispatchOutcome("placed", slots=tuple(slots))


def manual_change_restrictions(
    order: Order, ctx: DispatchContext, *,
    priority: int | None = None, due: TimeInstant | None = None,
    strategy: str = "Force", request: DispatchRequest | None = None,
) -> DispatchOutcome:
    """Relax an order's restrictions and repeat the planning with them."""
    if priority is not None:
        if not 1 <= priority <= 5:
            return DispatchOutcome("failed", reason="priority must be in 1..5")
        order.priority = priority
    if due is not None:
        if due <= order.release:
            return DispatchOutcome("failed", reason="due must be after release")
        order.due = due
    ctx.emit("manual-action", {
        "action": "change-restrictions", "order": order.id,
        "priority": order.priority, "due": order.due,
    })
    order.state = OrderState.PENDING
    return run_strategy(order, ctx, request or DispatchRequest(order.id, strategy=strategy))


def manual_delete_and_replace(
    order: Order, victim_order_id: str, ctx: DispatchContext,
    request: DispatchRequest | None = None,
) -> DispatchOutcome:
    """Clear another order off the plan and dispatch this one into the room
    it leaves. The victim queues for manual treatment."""
    victim = ctx.orders.get(victim_order_id)
    if victim is None:
        return DispatchOutcome("failed", reason=f"unknown order {victim_order_id!r}")
    for op in victim.operations:
        if op.id in ctx.plan:
            ctx.plan.remove_op(op.id)
            ctx.unbook(op.id)
    victim.state = OrderState.MANUAL
    ctx.emit("manual-action", {
        "action": "delete-and-replace", "order": order.id, "victim": victim_order_id,
    })
    return run_strategy(order, ctx, request or DispatchRequest(order.id, strategy="Force"))


def manual_outsource(order: Order, ctx: DispatchContext) -> DispatchOutcome:
    """Hand the order over the company boundary; planning stops here."""
    for op in order.operations:
        if op.id in ctx.plan:
            ctx.plan.remove_op(op.id)
            ctx.unbook(op.id)
    order.state = OrderState.OUTSOURCED
    ctx.emit("scm-outsource", {
        "order": order.id,
        "operations": [op.id for op in order.operations],
        "due": order.due,
    })
    return DispatchOutcome("placed", slots=(), reason="outsourced")


# -- strategy entry point ----------------------------------------------------------

def run_strategy(order: Order, ctx: DispatchContext, request: DispatchRequest) -> DispatchOutcome:
    """Dispatch one order with the requested strategy."""
    if request.strategy == "OPT":
        return dispatch_opt(order, ctx, request)
    if request.strategy == "Force":
        return dispatch_force(order, ctx, request)
    if request.strategy == "X-Competition":
        return dispatch_x_competition(order, ctx, request)
    if request.strategy == "Wait-X":
        # waiting beats placing late, so attempts reject past-due placements
        strict = replace(request.options, due_strict=True)
        outcome = dispatch_force(order, ctx, DispatchRequest(
            order.id, strategy="Force", options=strict, weights=request.weights,
        ))
        if outcome.placed or outcome.status == "needs-approval":
            return outcome
        deadline = request.deadline if request.deadline is not None else ctx.now + ctx.escalation_interval
        return enqueue_wait_x(order, deadline, ctx, DispatchRequest(
            order.id, strategy="Wait-X", deadline=deadline,
            options=strict, weights=request.weights,
        ))
    if request.strategy == "Manual":
        order.state = OrderState.MANUAL
        return DispatchOutcome("waiting", reason="queued for manual dispatch")
    raise ValueError(f"unknown strategy {request.strategy!r}")
