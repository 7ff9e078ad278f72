"""Discrete-event execution of one scenario.

The engine owns a Shop, a clock, and an action heap. Scripted actions (order
arrivals, disturbances, shift boundaries) are seeded up front; everything else
(operation starts and finishes, neutral-phase checks) is scheduled as the plan
evolves. Each processed action appends zero or more EventRecords to the trace,
which is the replay input format: one canonical JSON object per line.

Determinism contract: (scenario, seed, command log) fully determines the
trace. All randomness flows from one seeded generator, the heap breaks time
ties by insertion order, and live commands are replayed at the exact trace
position where they were ingested.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from random import Random

from . import scenario as scenario_mod
from .agents import Shop
from .dispatch import (
    DispatchRequest,
    expire_waiting,
    manual_change_restrictions,
    manual_delete_and_replace,
    manual_explicit_split,
    manual_outsource,
    manual_split_placement,
    redispatch_operation,
    retry_waiting,
    run_strategy,
)
from .model import MachineStatus, OrderState, TimeInstant
from .optimizer import OptimizationRun, OptimizerConfig
from .plan import makespan
from .scenario import Disturbance, OrderSpec, Scenario

EVENT_KINDS = frozenset({
    "order-arrival", "op-start", "op-finish", "machine-down", "machine-up",
    "tool-damage", "rush-order", "shift-start", "shift-end", "neutral-phase",
    "approval-emitted", "approval-resolved", "optimize-proposed",
})

APPROVAL_KINDS = ("overdraft-prio4", "wait-x-timeout", "optimization-proposed")

# ctx event payload kinds -> approval queue kinds
_APPROVAL_KIND_MAP = {
    "overdraft": "overdraft-prio4",
    "wait-x-timeout": "wait-x-timeout",
    "optimization": "optimization-proposed",
}


class EngineError(ValueError):
    """A rejected live command; ``code`` is machine-readable."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


@dataclass(frozen=True)
class EventRecord:
    time: TimeInstant
    seq: int
    kind: str
    payload: dict = field(compare=False)

    def line(self) -> str:
        doc = {"kind": self.kind, "payload": self.payload,
               "seq": self.seq, "time": self.time}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def parse(line: str) -> "EventRecord":
        doc = json.loads(line)
        return EventRecord(time=doc["time"], seq=doc["seq"],
                           kind=doc["kind"], payload=doc["payload"])


@dataclass
class ApprovalRequest:
    id: str
    kind: str  # overdraft-prio4 | wait-x-timeout | optimization-proposed
    created: TimeInstant
    subject: str  # order id or optimization run id
    state: str = "pending"  # pending | approved | rejected | expired
    payload: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"id": self.id, "kind": self.kind, "created": self.created,
                "subject": self.subject, "state": self.state, **self.payload}


def _slot_key(slot):
    return (slot.op_id, slot.part, slot.machine_id, slot.start, slot.end)


class Engine:
    """Single-threaded event loop over one scenario run."""

    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario
        self.seed = scenario.config.seed if seed is None else seed
        self.rng = Random(self.seed)
        self.shop: Shop = scenario.build_shop()
        self.clock: TimeInstant = 0
        self.trace: list[EventRecord] = []
        self.approvals: dict[str, ApprovalRequest] = {}
        self.optimizations: dict[str, OptimizationRun] = {}
        self.commands: list[dict] = []
        self._heap: list[tuple] = []
        self._tick = 0
        self._seq = 0
        self._ctx_cursor = 0
        self._scheduled: set[tuple] = set()
        self._finished_keys: set[tuple] = set()
        self._completed_ops: set[str] = set()
        self._completed_at: dict[str, TimeInstant] = {}
        self._specs: dict[str, OrderSpec] = {}
        self._last_activity: TimeInstant = 0
        self._last_optimized_fp: str | None = None
        self._optimize_requested = False
        self._finalized = False
        self._seed_script()

    # -- scheduling ------------------------------------------------------------

    def _push(self, time: TimeInstant, action: str, args: dict) -> None:
        self._tick += 1
        heapq.heappush(self._heap, (time, self._tick, action, args))

    def _seed_script(self) -> None:
        horizon = self.scenario.config.horizon
        # only boundaries strictly inside the run are events; a machine that
        # is simply always open contributes nothing
        for machine in sorted(self.scenario.machines, key=lambda m: m.id):
            for ws, we in machine.calendar.windows(0, horizon):
                if 0 < ws < horizon:
                    self._push(ws, "shift-start", {"machine": machine.id})
                if 0 < we < horizon:
                    self._push(we, "shift-end", {"machine": machine.id})
        for spec in self.scenario.order_specs:
            self._push(spec.order.arrival, "order-arrival", {"spec": spec})
        for d in self.scenario.disturbances:
            self._push(d.at, d.kind, {"disturbance": d})

    # -- trace ------------------------------------------------------------------

    def _record(self, kind: str, payload: dict) -> EventRecord:
        assert kind in EVENT_KINDS, f"unknown trace kind {kind!r}"
        self._seq += 1
        record = EventRecord(time=self.clock, seq=self._seq, kind=kind,
                             payload=payload)
        self.trace.append(record)
        return record

    def _drain_ctx_events(self) -> None:
        """Fold freshly emitted engine-internal events into the trace.

        Only approval emissions cross over; everything else (escalations,
        manual actions, optimization summaries) stays in the internal log
        and is surfaced through metrics."""
        events = self.shop.ctx.events
        while self._ctx_cursor < len(events):
            kind, payload = events[self._ctx_cursor]
            self._ctx_cursor += 1
            if kind != "approval-emitted":
                continue
            self._record("approval-emitted", dict(payload))
            queue_kind = _APPROVAL_KIND_MAP.get(payload.get("kind"))
            if queue_kind is None:
                continue
            subject = payload.get("order") or payload.get("run") or ""
            self.approvals[payload["approval_id"]] = ApprovalRequest(
                id=payload["approval_id"], kind=queue_kind, created=self.clock,
                subject=subject,
                payload={k: v for k, v in payload.items()
                         if k not in ("approval_id", "kind")},
            )

    def _sync_slots(self) -> None:
        """Schedule start/finish actions for any slot not seen before."""
        for slot in self.shop.plan.slots():
            key = _slot_key(slot)
            if key in self._scheduled:
                continue
            self._scheduled.add(key)
            self._push(slot.start, "op-start", {"key": key})
            self._push(slot.end, "op-finish", {"key": key})

    def _touch(self) -> None:
        """Dispatch activity: restart the neutral-phase countdown."""
        self._last_activity = self.clock
        period = self.scenario.config.quiet_period
        if period > 0:
            self._push(self.clock + period, "neutral-check",
                       {"stamp": self.clock})

    # -- the loop ----------------------------------------------------------------

    def step(self) -> bool:
        """Process one action; False when the script is exhausted."""
        if not self._heap:
            return False
        time, _tick, action, args = heapq.heappop(self._heap)
        self.clock = max(self.clock, time)
        self.shop.ctx.now = self.clock
        getattr(self, f"_do_{action.replace('-', '_')}")(**args)
        expire_waiting(self.shop.ctx, self.clock)
        self._drain_ctx_events()
        self._sync_slots()
        return True

    def run(self) -> "Engine":
        """Drain the whole script and settle every order's fate."""
        while self.step():
            pass
        self._finalize()
        return self

    def advance(self, until: TimeInstant) -> None:
        """Process everything scheduled up to and including ``until``."""
        while self._heap and self._heap[0][0] <= until:
            self.step()
        if until > self.clock:
            self.clock = until
            self.shop.ctx.now = until
            expire_waiting(self.shop.ctx, until)
            self._drain_ctx_events()

    def _finalize(self) -> None:
        """End of script: no order may be left in limbo."""
        if self._finalized:
            return
        self._finalized = True
        expire_waiting(self.shop.ctx, 10 ** 15)
        for order in self.shop.orders.values():
            if order.state is OrderState.WAITING:
                order.state = OrderState.FAILED
                order.failure_reason = order.failure_reason or "approval-unresolved"
            elif order.state is OrderState.PENDING:
                order.state = OrderState.FAILED
                order.failure_reason = order.failure_reason or "never-dispatched"
        self._drain_ctx_events()

    # -- scripted actions ----------------------------------------------------------

    def _arrive(self, spec: OrderSpec, kind: str, extra: dict | None = None) -> None:
        order = spec.fresh()
        if order.id in self.shop.orders:
            raise EngineError("duplicate-order",
                              f"order {order.id!r} already exists")
        self._specs[order.id] = spec
        self.shop.mma_create_job(order, excluded_areas=spec.excluded_areas)
        payload = {"order": order.id, "priority": order.priority,
                   "strategy": spec.strategy, **(extra or {})}
        if order.state is OrderState.MANUAL:
            payload["status"] = "manual"
        else:
            outcome = self.shop.dispatch(
                order.id, spec.request(self.scenario.config))
            payload["status"] = outcome.status
            if outcome.status == "failed":
                order.state = OrderState.FAILED
                order.failure_reason = outcome.reason or "dispatch-failed"
                payload["reason"] = order.failure_reason
            if outcome.displaced:
                payload["displaced"] = sorted(outcome.displaced)
        self._record(kind, payload)
        self._touch()

    def _do_order_arrival(self, spec: OrderSpec) -> None:
        self._arrive(spec, "order-arrival")

    def _do_shift_start(self, machine: str) -> None:
        self._record("shift-start", {"machine": machine})

    def _do_shift_end(self, machine: str) -> None:
        self._record("shift-end", {"machine": machine})

    def _do_op_start(self, key: tuple) -> None:
        op_id, part, machine_id, start, end = key
        slot = self.shop.plan.get(op_id, part)
        if slot is None or _slot_key(slot) != key:
            return  # the slot moved after this was scheduled
        self.shop.plan.freeze(op_id)  # started work never moves again
        owner = self._owner(op_id)
        order = self.shop.orders.get(owner) if owner else None
        if order is not None and order.state is OrderState.DISPATCHED:
            order.state = OrderState.IN_PROGRESS
        self._record("op-start", {
            "machine": machine_id, "operation": op_id,
            "order": order.id if order else None, "part": part,
        })

    def _do_op_finish(self, key: tuple) -> None:
        op_id, part, machine_id, start, end = key
        slot = self.shop.plan.get(op_id, part)
        if slot is None or _slot_key(slot) != key:
            return
        self._finished_keys.add(key)
        payload = {"machine": machine_id, "operation": op_id, "part": part,
                   "order": self._owner(op_id)}
        slots = self.shop.plan.op_slots(op_id)
        if op_id not in self._completed_ops and all(
                _slot_key(s) in self._finished_keys for s in slots):
            self._completed_ops.add(op_id)
            self.shop.complete_op(op_id, sum(s.end - s.start for s in slots))
            payload["op_complete"] = True
            order = self.shop.orders.get(self._owner(op_id) or "")
            if order is not None and all(
                    op.id in self._completed_ops for op in order.operations):
                order.state = OrderState.DONE
                self._completed_at[order.id] = self.clock
                payload["order_complete"] = True
        self._record("op-finish", payload)

    def _owner(self, op_id: str) -> str | None:
        op = self.shop._operation(op_id)
        return op.order_id if op is not None else None

    # -- disturbances -----------------------------------------------------------

    def _void_and_redispatch(self, op_ids: list[str]) -> tuple[list, list]:
        """Pull the named operations out of the plan and place them again;
        operations with no room route their order to the manual queue."""
        ctx = self.shop.ctx
        by_start = sorted(
            op_ids,
            key=lambda oid: min((s.start for s in self.shop.plan.op_slots(oid)),
                                default=0))
        for op_id in by_start:
            ctx.unbook(op_id)
            self.shop.plan.remove_op(op_id)
            self._completed_ops.discard(op_id)
        moved, manual = [], []
        for op_id in by_start:
            order = self.shop.orders[self._owner(op_id)]
            if redispatch_operation(ctx, order, op_id, strategy="Force"):
                moved.append(op_id)
            else:
                order.state = OrderState.MANUAL
                order.failure_reason = "compensation-failed"
                ctx.emit("approval-emitted", {
                    "kind": "manual-queue", "order": order.id, "operation": op_id,
                })
                manual.append(op_id)
        return moved, manual

    def _do_machine_down(self, disturbance: Disturbance) -> None:
        machine = self.shop.machines[disturbance.machine]
        machine.status = MachineStatus.DOWN
        affected = sorted({
            s.op_id for s in self.shop.plan.slots()
            if s.machine_id == machine.id and s.end > self.clock
        })
        moved, manual = self._void_and_redispatch(affected)
        self._record("machine-down", {
            "machine": machine.id, "until": disturbance.until,
            "re_dispatched": moved, "to_manual": manual,
        })
        if disturbance.until is not None:
            self._push(disturbance.until, "machine-up", {"machine": machine.id})
        self._touch()

    def _do_machine_up(self, machine: str) -> None:
        self.shop.machines[machine].status = MachineStatus.UP
        self._record("machine-up", {"machine": machine})
        placed = retry_waiting(self.shop.ctx, trigger="machine-up")
        self._touch()
        if placed:
            self._sync_slots()

    def _do_tool_damage(self, disturbance: Disturbance) -> None:
        ledger = self.shop.ledgers.get((disturbance.area, disturbance.resource))
        if ledger is None or ledger.stock.get(disturbance.item, 0) <= 0:
            # already destroyed or consumed down to zero: nothing left to
            # break, so nothing to compensate either
            self._record("tool-damage", {
                "area": disturbance.area, "resource": disturbance.resource,
                "item": disturbance.item, "re_dispatched": [], "to_manual": [],
            })
            self._touch()
            return
        affected = self.shop.resource_disturb(
            disturbance.area, disturbance.resource, disturbance.item, self.clock)
        live = [oid for oid in affected if self.shop.plan.op_slots(oid)]
        moved, manual = self._void_and_redispatch(sorted(set(live)))
        self._record("tool-damage", {
            "area": disturbance.area, "resource": disturbance.resource,
            "item": disturbance.item, "re_dispatched": moved,
            "to_manual": manual,
        })
        self._touch()

    def _do_rush_order(self, disturbance: Disturbance) -> None:
        self._arrive(disturbance.rush, "rush-order")

    def _do_back_order(self, disturbance: Disturbance) -> None:
        order = self.shop.orders.get(disturbance.order)
        if order is None:
            raise EngineError("unknown-order",
                              f"back-order for unknown {disturbance.order!r}")
        order.due += disturbance.extend_due
        payload = {"order": order.id, "reason": "back-order",
                   "due": order.due, "extended_by": disturbance.extend_due}
        if order.state in (OrderState.WAITING, OrderState.FAILED):
            for entry in list(self.shop.ctx.waiting):
                if entry.order_id == order.id:
                    self.shop.ctx.waiting.remove(entry)
            order.state = OrderState.PENDING
            order.failure_reason = None
            spec = self._specs[order.id]
            outcome = run_strategy(order, self.shop.ctx,
                                   replace(spec.request(self.scenario.config),
                                           deadline=order.due))
            payload["status"] = outcome.status
            if outcome.status == "failed":
                order.state = OrderState.FAILED
                order.failure_reason = outcome.reason or "dispatch-failed"
                payload["reason"] = order.failure_reason
        elif order.state in (OrderState.DISPATCHED, OrderState.IN_PROGRESS):
            unstarted = sorted({
                op.id for op in order.operations
                for s in self.shop.plan.op_slots(op.id)
                if s.start > self.clock and not s.frozen
            })
            moved, manual = self._void_and_redispatch(unstarted)
            payload["re_dispatched"] = moved
            if manual:
                payload["to_manual"] = manual
        else:
            payload["status"] = order.state.value
        self._record("order-arrival", payload)
        self._touch()

    # -- optimization ---------------------------------------------------------------

    def _do_neutral_check(self, stamp: TimeInstant) -> None:
        if stamp != self._last_activity:
            return  # something happened since; a fresher check is queued
        fingerprint = self.shop.plan.fingerprint()
        if fingerprint == self._last_optimized_fp and not self._optimize_requested:
            return
        if len(self.shop.plan) < 2:
            return
        self._propose_optimization(stamp)

    def _propose_optimization(self, since: TimeInstant) -> None:
        self._optimize_requested = False
        self._last_optimized_fp = self.shop.plan.fingerprint()
        self._record("neutral-phase", {
            "since": since, "quiet_period": self.scenario.config.quiet_period,
        })
        config = OptimizerConfig(
            strategy="Force", seed=self.rng.randrange(2 ** 32),
            quiet_period=self.scenario.config.quiet_period,
        )
        run = self.shop.optimize(config)
        run_id = f"run-{len(self.optimizations) + 1}"
        self.optimizations[run_id] = run
        self._record("optimize-proposed", {
            "run": run_id, "before": run.base_makespan,
            "after": run.candidate_makespan,
            "improvement": round(run.improvement, 4),
            "winning": run.winning.label if run.winning else None,
        })
        if run.improvement <= 0:
            self.shop.decide_optimization(run, "deny")
            return
        self.shop.ctx.emit("approval-emitted", {
            "kind": "optimization", "run": run_id,
        })
        self._drain_ctx_events()
        if self.scenario.config.auto_accept_optimizations:
            approval_id = next(
                a.id for a in self.approvals.values()
                if a.subject == run_id and a.state == "pending")
            self._resolve_approval(approval_id, "approve")

    # -- live commands -----------------------------------------------------------------

    def ingest_command(self, command: dict) -> list[EventRecord]:
        """Apply one gateway command at the current clock; returns the trace
        records it produced. Rejections raise EngineError and leave no trace."""
        before = len(self.trace)
        self.commands.append({"at_event": before, "at_clock": self.clock,
                              "command": dict(command)})
        try:
            self._execute_command(dict(command))
        except EngineError:
            self.commands.pop()
            raise
        self._drain_ctx_events()
        self._sync_slots()
        return self.trace[before:]

    def _execute_command(self, command: dict) -> None:
        name = command.pop("command", None)
        if name == "submit-order":
            doc = command.get("order")
            try:
                spec = scenario_mod._parse_order(doc, "order")
            except scenario_mod.ScenarioError as exc:
                raise EngineError("bad-order", str(exc)) from exc
            if spec.order.id in self.shop.orders:
                raise EngineError("duplicate-order",
                                  f"order {spec.order.id!r} already exists")
            spec = replace(spec, order=replace(spec.order, arrival=self.clock))
            self._arrive(spec, "order-arrival", extra={"submitted": True})
        elif name == "resolve-approval":
            self._resolve_approval(command.get("approval", ""),
                                   command.get("decision", ""))
        elif name == "restore-optimization":
            self._restore_optimization(command.get("run", ""))
        elif name == "optimize-now":
            quiet_for = self.clock - self._last_activity
            if quiet_for >= self.scenario.config.quiet_period:
                self._propose_optimization(self._last_activity)
            else:
                # dispatching is active; honor the request at the next lull
                self._optimize_requested = True
                self._touch()
        elif name == "inject":
            try:
                d = scenario_mod._parse_disturbance(
                    command.get("disturbance"), "disturbance")
            except scenario_mod.ScenarioError as exc:
                raise EngineError("bad-disturbance", str(exc)) from exc
            if d.at < self.clock:
                raise EngineError("time-passed",
                                  f"cannot inject at {d.at}, clock is {self.clock}")
            self._push(d.at, d.kind, {"disturbance": d})
        elif name == "advance":
            until = command.get("until")
            if not isinstance(until, int) or until < self.clock:
                raise EngineError("bad-time", "advance needs until >= clock")
            self.advance(until)
        elif name == "manual":
            self._manual_action(command)
        else:
            raise EngineError("unknown-command", f"unknown command {name!r}")

    def _resolve_approval(self, approval_id: str, decision: str) -> None:
        approval = self.approvals.get(approval_id)
        if approval is None:
            raise EngineError("unknown-approval",
                              f"no approval {approval_id!r}")
        if approval.state != "pending":
            raise EngineError("approval-not-pending",
                              f"approval {approval_id} already {approval.state}")
        if decision not in ("approve", "reject"):
            raise EngineError("bad-decision",
                              f"decision must be approve or reject, got {decision!r}")
        approval.state = "approved" if decision == "approve" else "rejected"
        payload = {"approval": approval_id, "kind": approval.kind,
                   "decision": decision}

        if approval.kind == "overdraft-prio4":
            order = self.shop.orders[approval.subject]
            spec = self._specs[approval.subject]
            request = spec.request(self.scenario.config)
            if decision == "approve":
                options = replace(request.options, overdraft_approved=True)
            else:
                # continue the fallback chain without the overdraft option
                options = replace(request.options, overdraft_allowed=False)
            outcome = run_strategy(order, self.shop.ctx,
                                   replace(request, options=options))
            payload["status"] = outcome.status
            self._touch()
        elif approval.kind == "wait-x-timeout":
            order = self.shop.orders[approval.subject]
            if decision == "approve":
                order.state = OrderState.MANUAL
                order.failure_reason = "wait-x-timeout"
                payload["status"] = "manual"
            else:
                payload["status"] = order.state.value
        else:  # optimization-proposed
            run = self.optimizations[approval.subject]
            payload["run"] = approval.subject
            if decision == "approve":
                try:
                    self.shop.decide_optimization(run, "accept")
                    payload["status"] = "accepted"
                    self._touch()
                except ValueError:
                    approval.state = "rejected"
                    payload["decision"] = "approve"
                    payload["status"] = "stale"
            else:
                self.shop.decide_optimization(run, "deny")
                payload["status"] = "denied"
        self._record("approval-resolved", payload)

    def _restore_optimization(self, run_id: str) -> None:
        run = self.optimizations.get(run_id)
        if run is None:
            raise EngineError("unknown-run", f"no optimization run {run_id!r}")
        try:
            self.shop.decide_optimization(run, "restore")
        except ValueError as exc:
            raise EngineError("restore-window-closed", str(exc)) from exc
        approval = next((a for a in self.approvals.values()
                         if a.subject == run_id), None)
        self._record("approval-resolved", {
            "approval": approval.id if approval else None,
            "kind": "optimization-proposed", "decision": "restore",
            "run": run_id, "status": "restored",
        })
        self._touch()

    def _manual_action(self, command: dict) -> None:
        action = command.get("action")
        order = self.shop.orders.get(command.get("order", ""))
        if order is None:
            raise EngineError("unknown-order",
                              f"no order {command.get('order')!r}")
        ctx = self.shop.ctx
        if action == "dispatch":
            strategy = command.get("strategy", "Force")
            request = DispatchRequest(
                order.id, strategy=strategy,
                x_threshold=command.get("x_threshold"),
                deadline=command.get("deadline"),
                options=self.scenario.config.options(),
                weights=self.scenario.config.weights)
            outcome = run_strategy(order, ctx, request)
            if not outcome.placed and outcome.status not in ("waiting", "needs-approval"):
                raise EngineError("dispatch-failed", outcome.reason or "no placement")
        elif action == "outsource":
            manual_outsource(order, ctx)
        elif action == "split":
            try:
                siblings = manual_explicit_split(order, int(command.get("n", 2)), ctx)
            except ValueError as exc:
                raise EngineError("bad-split", str(exc)) from exc
            for sibling in siblings:
                if sibling.id not in self.shop.orders:
                    self.shop.orders[sibling.id] = sibling
                    self._specs[sibling.id] = replace(
                        self._specs[order.id], order=sibling)
        elif action == "place":
            pieces = [tuple(p) for p in command.get("pieces", [])]
            outcome = manual_split_placement(order, command.get("operation", ""),
                                             pieces, ctx)
            if not outcome.placed:
                raise EngineError("placement-rejected",
                                  outcome.reason or "rejected")
        elif action == "change":
            outcome = manual_change_restrictions(
                order, ctx, priority=command.get("priority"),
                due=command.get("due"),
                strategy=command.get("strategy", "Force"))
            if not outcome.placed and outcome.status not in ("waiting", "needs-approval"):
                raise EngineError("dispatch-failed", outcome.reason or "no placement")
        elif action == "delete-replace":
            victim = command.get("victim", "")
            if victim not in self.shop.orders:
                raise EngineError("unknown-order", f"no victim order {victim!r}")
            manual_delete_and_replace(order, victim, ctx)
        else:
            raise EngineError("unknown-action", f"unknown manual action {action!r}")
        self._touch()

    # -- results ------------------------------------------------------------------

    def completion_of(self, order_id: str) -> TimeInstant | None:
        return self._completed_at.get(order_id)

    def events_after(self, seq: int) -> list[EventRecord]:
        return [r for r in self.trace if r.seq > seq]

    def state_hash(self) -> str:
        """Digest of everything replay must reproduce: plan, order states,
        and the clock."""
        blob = json.dumps({
            "clock": self.clock,
            "orders": sorted((o.id, o.state.value)
                             for o in self.shop.orders.values()),
            "plan": self.shop.plan.fingerprint(),
        }, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def metrics(self) -> dict:
        plan = self.shop.plan
        slots = plan.slots()
        end = max((s.end for s in slots), default=0)
        utilization = {}
        for mid, machine in sorted(self.shop.machines.items()):
            busy = sum(s.end - s.start for s in slots if s.machine_id == mid)
            open_minutes = machine.calendar.open_minutes(0, end) if end else 0
            utilization[mid] = round(busy / open_minutes, 4) if open_minutes else 0.0
        orders = list(self.shop.orders.values())
        hits = sum(
            1 for o in orders
            if o.state is OrderState.DONE
            and self._completed_at.get(o.id, o.due + 1) <= o.due)
        accepted = [r.improvement for r in self.optimizations.values()
                    if r.status in ("accepted", "restored")]
        return {
            "due_hit_rate": round(hits / len(orders), 4) if orders else 1.0,
            "escalations": sum(1 for k, _ in self.shop.ctx.events
                               if k == "escalation"),
            "events": len(self.trace),
            "improvement": round(max(accepted), 4) if accepted else 0.0,
            "makespan": makespan(plan),
            "optimizations_accepted": len(accepted),
            "optimizations_proposed": len(self.optimizations),
            "orders": dict(sorted(Counter(
                o.state.value for o in orders).items())),
            "overdrafts": sum(1 for s in slots if s.overdraft),
            "splits": sum(1 for o in orders
                          for op in o.operations if op.split_of),
            "utilization": utilization,
        }

    def trace_lines(self) -> list[str]:
        return [r.line() for r in self.trace]

    def write_trace(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for line in self.trace_lines():
                handle.write(line + "\n")


def run(scenario: Scenario, seed: int | None = None) -> Engine:
    """Execute the whole scenario script; returns the drained engine."""
    return Engine(scenario, seed).run()


@dataclass(frozen=True)
class ReplayReport:
    ok: bool
    divergence: int | None  # first differing line index
    expected: str | None
    produced: list[str]
    engine: Engine

    @property
    def state_hash(self) -> str:
        return self.engine.state_hash()


def replay(scenario: Scenario, lines: list[str], seed: int | None = None) -> ReplayReport:
    """Re-run the scenario and compare against a recorded trace line by line.

    Only script-driven runs replay from the trace alone; runs with live
    commands restore through snapshots instead (see save_state)."""
    engine = run(scenario, seed)
    produced = engine.trace_lines()
    cleaned = [line.strip() for line in lines if line.strip()]
    for i, (want, got) in enumerate(zip(cleaned, produced)):
        if want != got:
            return ReplayReport(False, i, want, produced, engine)
    if len(cleaned) != len(produced):
        shorter = min(len(cleaned), len(produced))
        expected = cleaned[shorter] if shorter < len(cleaned) else None
        return ReplayReport(False, shorter, expected, produced, engine)
    return ReplayReport(True, None, None, produced, engine)


# -- snapshots ----------------------------------------------------------------------

def save_state(engine: Engine, path) -> None:
    """Checkpoint an engine mid-run. The snapshot pins the scenario, the
    seed, the live-command log, and how far the trace got; restoring replays
    deterministically to exactly that point."""
    doc = {
        "commands": engine.commands,
        "events": len(engine.trace),
        "scenario": scenario_mod.to_document(engine.scenario),
        "seed": engine.seed,
        "clock": engine.clock,
    }
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def restore_state(path) -> Engine:
    with open(path, encoding="utf-8") as handle:
        doc = json.load(handle)
    engine = Engine(scenario_mod.parse_document(doc["scenario"]), doc["seed"])
    for entry in doc["commands"]:
        while len(engine.trace) < entry["at_event"] and engine.step():
            pass
        # the clock can sit past the last recorded event (advance with an
        # empty stretch of script); commands must replay at the same instant
        if entry.get("at_clock", 0) > engine.clock:
            engine.advance(entry["at_clock"])
        engine.ingest_command(entry["command"])
    while len(engine.trace) < doc["events"] and engine.step():
        pass
    if len(engine.trace) != doc["events"]:
        raise EngineError("snapshot-diverged",
                          "replay could not reach the snapshot point")
    if doc["clock"] > engine.clock:
        engine.advance(doc["clock"])
    return engine
