"""Freeze-and-reschedule makespan optimization.

Each pass freezes part of the schedule, clears the rest, and dispatches the
cleared operations again; a pass only counts when the result validates and
the makespan shrinks. Four freeze heuristics run in order: same-machine pair
swaps, one machine's operations at a time, a random time window, and the two
idlest machines off the critical path. The best candidate is returned as a
proposal: management accepts, denies, or restores.

Runs are meant for quiet moments. The simulator starts one after
``quiet_period`` minutes without dispatch activity; calling ``optimize``
directly is the explicit-command path.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

from .dispatch import DispatchContext, _award, redispatch_operation, retry_waiting
from .model import Duration, Operation, Order, Slot
from .plan import Plan, ValidationReport, makespan, validate_plan

DEFAULT_QUIET_PERIOD = 30

Validator = Callable[[], ValidationReport]


@dataclass(frozen=True)
class OptimizerConfig:
    """Search budget and knobs. Level 1 enumerates each adjacent same-machine
    pair once and level 2 visits every machine; levels 3 and 4 are capped."""

    strategy: str = "Force"
    level3_passes: int = 5
    level4_passes: int = 5
    seed: int = 0
    quiet_period: Duration = DEFAULT_QUIET_PERIOD


@dataclass(frozen=True)
class PassSpec:
    """One freeze-and-reschedule pass: ``keep`` stays put, ``moves`` are
    pinned at new positions, everything else is cleared and re-dispatched."""

    label: str
    keep: frozenset[str] = frozenset()
    moves: tuple[tuple[str, tuple[Slot, ...]], ...] = ()

    def frozen_ops(self) -> frozenset[str]:
        return self.keep | {op_id for op_id, _ in self.moves}


@dataclass
class OptimizationRun:
    """A proposed schedule improvement and its decision lifecycle."""

    base: Plan
    candidate: Plan
    base_makespan: Duration
    candidate_makespan: Duration
    passes: tuple[str, ...]
    winning: PassSpec | None
    seed: int
    strategy: str
    status: str = "proposed"  # proposed | accepted | denied | restored
    _restore_token: object = field(default=None, repr=False)

    @property
    def improvement(self) -> float:
        if self.base_makespan == 0:
            return 0.0
        return 1.0 - self.candidate_makespan / self.base_makespan

    def summary(self) -> dict:
        return {
            "status": self.status,
            "before": self.base_makespan,
            "after": self.candidate_makespan,
            "improvement": round(self.improvement, 4),
            "passes": list(self.passes),
            "winning": self.winning.label if self.winning is not None else None,
            "seed": self.seed,
            "strategy": self.strategy,
        }


# -- freeze heuristics ---------------------------------------------------------

def level1_repair_swaps(ctx: DispatchContext) -> list[PassSpec]:
    """A pass per adjacent same-machine pair, the pair pinned in swapped
    order. Whether the swap shortens the schedule is judged by running the
    pass, so only genuinely beneficial swaps survive."""
    specs: list[PassSpec] = []
    for machine_id in ctx.plan.machines_used():
        row = ctx.plan.machine_slots(machine_id)
        for a, b in zip(row, row[1:]):
            if a.op_id == b.op_id:
                continue
            # only monolithic, movable slots swap cleanly
            if a.part is not None or b.part is not None:
                continue
            if a.frozen or b.frozen or a.overdraft or b.overdraft:
                continue
            first = Slot(b.op_id, machine_id, a.start, a.start + b.duration)
            second = Slot(a.op_id, machine_id, first.end, first.end + a.duration)
            specs.append(PassSpec(
                label=f"level1:{machine_id}:{b.op_id}<->{a.op_id}",
                moves=((b.op_id, (first,)), (a.op_id, (second,))),
            ))
    return specs


def level2_basic_shuffle(ctx: DispatchContext) -> list[PassSpec]:
    """A pass per machine, that machine's operations frozen, the widest
    internal gap first."""
    ranked: list[tuple[int, str, frozenset[str]]] = []
    for machine_id in ctx.plan.machines_used():
        row = ctx.plan.machine_slots(machine_id)
        gap = max((b.start - a.end for a, b in zip(row, row[1:])), default=0)
        ranked.append((-gap, machine_id, _ops_wholly_on(ctx.plan, {machine_id})))
    return [
        PassSpec(label=f"level2:{machine_id}", keep=keep)
        for _, machine_id, keep in sorted(ranked)
    ]


def level3_vertical_shuffle(ctx: DispatchContext, rng: random.Random) -> PassSpec:
    """Freeze every order that lies entirely inside a random time window."""
    slots = ctx.plan.slots()
    lo = min((s.start for s in slots), default=0)
    hi = max((s.end for s in slots), default=0)
    span = hi - lo
    width = max(1, int(span * rng.uniform(0.10, 0.40)))
    w_start = lo + int(rng.uniform(0, max(0, span - width)))
    return PassSpec(
        label=f"level3:{w_start}+{width}",
        keep=_orders_within(ctx, w_start, w_start + width),
    )


def level4_horizontal_shuffle(ctx: DispatchContext, passes: int) -> list[PassSpec]:
    """Freeze pairs of machines that are off the critical path, the pair with
    the most combined idle time first. Needs at least two such machines."""
    if len(ctx.machines) < 3:
        return []
    critical = _critical_machines(ctx)
    calm = [m for m in sorted(ctx.machines) if m not in critical]
    if len(calm) < 2:
        return []
    idle = {m: _total_idle(ctx.plan, m) for m in calm}
    pairs = sorted(combinations(calm, 2),
                   key=lambda pair: (-(idle[pair[0]] + idle[pair[1]]), pair))
    return [
        PassSpec(label=f"level4:{a}+{b}", keep=_ops_wholly_on(ctx.plan, {a, b}))
        for a, b in pairs[:max(0, passes)]
    ]


def _ops_wholly_on(plan: Plan, machine_ids: set[str]) -> frozenset[str]:
    candidates = {
        s.op_id for m in machine_ids for s in plan.machine_slots(m)
    }
    return frozenset(
        op_id for op_id in candidates
        if all(s.machine_id in machine_ids for s in plan.op_slots(op_id))
    )


def _orders_within(ctx: DispatchContext, w_start: int, w_end: int) -> frozenset[str]:
    """Operation ids of orders whose every operation is placed inside the
    window. An order clipped by the window edge stays out."""
    keep: set[str] = set()
    for order in ctx.orders.values():
        spans = [ctx.plan.op_slots(op.id) for op in order.operations]
        if not all(spans):
            continue
        starts = [s.start for slots in spans for s in slots]
        ends = [s.end for slots in spans for s in slots]
        if min(starts) >= w_start and max(ends) <= w_end:
            keep.update(op.id for op in order.operations)
    return frozenset(keep)


def _critical_machines(ctx: DispatchContext) -> frozenset[str]:
    """Machines hosting the chain of slots that realizes the makespan,
    walked back from the last-ending slot through abutting same-machine
    slots and binding chain predecessors."""
    slots = ctx.plan.slots()
    if not slots:
        return frozenset()
    cur = max(slots, key=lambda s: (s.end, s.machine_id, s.op_id))
    critical = {cur.machine_id}
    while True:
        pred_ids = _pred_op_ids(ctx, cur.op_id)
        binding = [
            s for s in slots
            if (s.machine_id == cur.machine_id and s.end == cur.start
                and s.key != cur.key)
            or (s.op_id in pred_ids
                and s.end + ctx.transit(s.machine_id, cur.machine_id) == cur.start)
        ]
        if not binding:
            return frozenset(critical)
        cur = max(binding, key=lambda s: (s.end, s.machine_id, s.op_id))
        critical.add(cur.machine_id)


def _pred_op_ids(ctx: DispatchContext, op_id: str) -> frozenset[str]:
    for order in ctx.orders.values():
        stages = order.stages()
        for index, stage in enumerate(stages):
            if any(op.id == op_id for op in stage):
                if index == 0:
                    return frozenset()
                return frozenset(op.id for op in stages[index - 1])
    return frozenset()


def _total_idle(plan: Plan, machine_id: str) -> int:
    row = plan.machine_slots(machine_id)
    return sum(b.start - a.end for a, b in zip(row, row[1:]))


# -- pass execution ------------------------------------------------------------

def _find_operation(ctx: DispatchContext, op_id: str) -> tuple[Order, Operation] | None:
    for order in ctx.orders.values():
        for op in order.operations:
            if op.id == op_id:
                return order, op
    return None


def _run_pass(
    ctx: DispatchContext, spec: PassSpec, strategy: str, validator: Validator,
    *, commit: bool = False,
) -> tuple[Plan, Duration] | None:
    """Execute one freeze-and-reschedule pass in a transaction. Exploratory
    runs stay quiet and always roll back; a committing run keeps the result
    and its message trail. None means the pass fell apart."""
    frozen = spec.frozen_ops()
    moved_ids = [op_id for op_id, _ in spec.moves]
    cleared: list[tuple[int, str]] = []
    for slot in ctx.plan.slots():
        if slot.op_id in frozen or slot.frozen:
            continue
        if _find_operation(ctx, slot.op_id) is None:
            continue  # foreign slots cannot be re-dispatched; leave them be
        entry = (min(s.start for s in ctx.plan.op_slots(slot.op_id)), slot.op_id)
        if entry not in cleared:
            cleared.append(entry)
    cleared.sort()
    if not cleared and not spec.moves:
        return None  # everything frozen: the pass cannot change a thing

    token = ctx.snapshot()
    quiet_before = ctx.quiet
    ctx.quiet = quiet_before if commit else True
    result: tuple[Plan, Duration] | None = None
    try:
        for op_id in moved_ids + [op_id for _, op_id in cleared]:
            ctx.unbook(op_id)
            ctx.plan.remove_op(op_id)
        ok = True
        for op_id, slots in spec.moves:
            found = _find_operation(ctx, op_id)
            ok = found is not None and _award(ctx, found[1], list(slots))
            if not ok:
                break
        if ok:
            for _, op_id in cleared:
                found = _find_operation(ctx, op_id)
                if found is None or not redispatch_operation(
                        ctx, found[0], op_id, strategy=strategy):
                    ok = False
                    break
        if ok and validator().ok:
            result = (ctx.plan.clone(), makespan(ctx.plan))
    finally:
        ctx.quiet = quiet_before
        if result is None or not commit:
            ctx.rollback(token)
    return result


def _default_validator(ctx: DispatchContext) -> Validator:
    return lambda: validate_plan(ctx.plan, ctx.orders, ctx.machines,
                                 transit=ctx.transit)


# -- the run and its decisions ---------------------------------------------------

def optimize(
    ctx: DispatchContext, config: OptimizerConfig | None = None,
    *, validator: Validator | None = None,
) -> OptimizationRun:
    """Search for a shorter schedule and return the best candidate found.

    Every pass runs against the same base state and rolls back afterwards;
    the live plan is untouched until the run is accepted. The candidate
    equals the base when nothing improves."""
    config = config or OptimizerConfig()
    check = validator or _default_validator(ctx)
    if not check().ok:
        raise ValueError("the base plan does not validate")
    rng = random.Random(config.seed)
    base = ctx.plan.clone()
    base_makespan = makespan(base)

    specs = level1_repair_swaps(ctx)
    specs += level2_basic_shuffle(ctx)
    specs += [level3_vertical_shuffle(ctx, rng) for _ in range(config.level3_passes)]
    specs += level4_horizontal_shuffle(ctx, config.level4_passes)

    best_plan, best_makespan, winning = base.clone(), base_makespan, None
    executed: list[str] = []
    for spec in specs:
        executed.append(spec.label)
        result = _run_pass(ctx, spec, config.strategy, check)
        if result is not None and result[1] < best_makespan:
            best_plan, best_makespan = result
            winning = spec
    run = OptimizationRun(
        base=base, candidate=best_plan,
        base_makespan=base_makespan, candidate_makespan=best_makespan,
        passes=tuple(executed), winning=winning,
        seed=config.seed, strategy=config.strategy,
    )
    ctx.emit("optimization", run.summary())
    return run


def accept_or_restore(
    ctx: DispatchContext, run: OptimizationRun, decision: str,
    *, validator: Validator | None = None,
) -> Plan:
    """Apply a management decision to a run.

    accept: the candidate becomes the live plan (replayed through booking so
    reservations follow) and waiting orders get a retry. deny: the base stays
    untouched. restore: the pre-accept state comes back, allowed only while
    nothing has dispatched since the accept."""
    if decision == "deny":
        if run.status != "proposed":
            raise ValueError(f"cannot deny a {run.status} run")
        run.status = "denied"
        ctx.emit("optimization-decision", run.summary())
        return ctx.plan

    if decision == "accept":
        if run.status != "proposed":
            raise ValueError(f"cannot accept a {run.status} run")
        if ctx.plan.fingerprint() != run.base.fingerprint():
            run.status = "denied"
            raise ValueError("the plan changed while the run was pending; run discarded")
        run._restore_token = ctx.snapshot()
        if run.winning is not None:
            check = validator or _default_validator(ctx)
            result = _run_pass(ctx, run.winning, run.strategy, check, commit=True)
            if result is None:
                run.status = "denied"
                raise ValueError("the winning pass no longer applies; run discarded")
            if result[0].fingerprint() != run.candidate.fingerprint():
                ctx.rollback(run._restore_token)
                run.status = "denied"
                raise ValueError("replay diverged from the candidate; run discarded")
        run.status = "accepted"
        ctx.emit("optimization-decision", run.summary())
        retry_waiting(ctx, trigger="optimization-accepted")
        return ctx.plan

    if decision == "restore":
        if run.status != "accepted":
            raise ValueError(f"cannot restore a {run.status} run")
        if ctx.plan.fingerprint() != run.candidate.fingerprint():
            raise ValueError("the schedule moved on since the accept; restore window closed")
        ctx.rollback(run._restore_token)
        run.status = "restored"
        ctx.emit("optimization-decision", run.summary())
        return ctx.plan

    raise ValueError(f"unknown decision {decision!r}")
