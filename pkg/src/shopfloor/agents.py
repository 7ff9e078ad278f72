"""Agent runtime: organizational areas, the message protocol, resource
ledgers, and the shop facade that wires them into dispatch.

Agents here are logical entities: an addressing and state boundary, not a
thread. One engine processes commands in order, so the message log is totally
ordered and replays byte-identically. The roles follow the usual split into
consumer agents (one per order) and supply agents (machines plus the tool,
jig, material and logistics keepers of each area).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace

from .dispatch import (
    DEFAULT_ESCALATION_INTERVAL,
    DispatchContext,
    DispatchOutcome,
    DispatchRequest,
    Proposal,
    _award,
    enqueue_wait_x,
    filter_machines,
    machine_proposal,
    run_strategy,
)
from .indexes import WeightConfig, update_apt
from .model import (
    Duration,
    Machine,
    Operation,
    Order,
    OrderState,
    Slot,
    TimeInstant,
)
from .optimizer import OptimizationRun, OptimizerConfig, accept_or_restore
from .optimizer import optimize as _optimize
from .plan import Plan, ValidationReport, validate_plan

RESOURCE_KINDS = ("tool", "jig", "material")

MESSAGE_KINDS = frozenset({
    "call-for-proposal", "proposal", "award", "reject", "status-query",
    "status-reply", "disturbance", "reservation", "release", "scm-outsource",
})


# -- organizational structure --------------------------------------------------

@dataclass(frozen=True)
class Area:
    """One node of the organizational tree. Level 1 is the whole network;
    higher levels are smaller sectors. Machines live on leaves only."""

    id: str
    level: int
    parent: str | None = None
    machine_ids: frozenset[str] = frozenset()
    transit_minutes: Duration = 0
    transport_capacity: int = 1

    def __post_init__(self):
        if self.level < 1:
            raise ValueError(f"area {self.id}: level must be >= 1")
        if self.transit_minutes < 0:
            raise ValueError(f"area {self.id}: transit must be >= 0")
        if self.transport_capacity < 1:
            raise ValueError(f"area {self.id}: transport capacity must be >= 1")


class OrgStructure:
    """The area tree: one root at level 1, every machine in exactly one leaf.

    The structure is immutable; edits build a new structure (see
    Shop.sea_define). Scope chains read from a leaf to the root, so the last
    scope is always the whole network.
    """

    def __init__(self, areas):
        areas = list(areas)
        self.areas: dict[str, Area] = {a.id: a for a in areas}
        if len(self.areas) != len(areas):
            raise ValueError("duplicate area ids")
        roots = [a for a in self.areas.values() if a.parent is None]
        if len(roots) != 1:
            raise ValueError(f"need exactly one root area, got {len(roots)}")
        self.root = roots[0]
        if self.root.level != 1:
            raise ValueError("root area must be level 1")
        self._children: dict[str, list[str]] = {aid: [] for aid in self.areas}
        for a in self.areas.values():
            if a.parent is not None:
                if a.parent not in self.areas:
                    raise ValueError(f"area {a.id}: unknown parent {a.parent!r}")
                if a.level != self.areas[a.parent].level + 1:
                    raise ValueError(f"area {a.id}: level must be parent level + 1")
                self._children[a.parent].append(a.id)
        for aid in self._children:
            self._children[aid].sort()
        owner: dict[str, str] = {}
        for a in self.areas.values():
            if self._children[a.id] and a.machine_ids:
                raise ValueError(f"area {a.id}: machines belong on leaf areas")
            for mid in a.machine_ids:
                if mid in owner:
                    raise ValueError(f"machine {mid} in areas {owner[mid]} and {a.id}")
                owner[mid] = a.id
        self._leaf_of = owner

    @staticmethod
    def single_area(machine_ids, area_id: str = "shop", **kw) -> "OrgStructure":
        return OrgStructure([Area(area_id, 1, machine_ids=frozenset(machine_ids), **kw)])

    def leaf_of(self, machine_id: str) -> Area:
        return self.areas[self._leaf_of[machine_id]]

    def children(self, area_id: str) -> list[Area]:
        return [self.areas[c] for c in self._children[area_id]]

    def machines_under(self, area_id: str) -> frozenset[str]:
        area = self.areas[area_id]
        if not self._children[area_id]:
            return area.machine_ids
        out: set[str] = set(area.machine_ids)
        for child in self._children[area_id]:
            out |= self.machines_under(child)
        return frozenset(out)

    def chain(self, area_id: str) -> list[Area]:
        """Areas from the given one up to the root, inclusive."""
        out = [self.areas[area_id]]
        while out[-1].parent is not None:
            out.append(self.areas[out[-1].parent])
        return out

    def scope_chain(self, area_id: str) -> list[frozenset[str]]:
        return [self.machines_under(a.id) for a in self.chain(area_id)]

    def edited(self, **area_changes) -> "OrgStructure":
        """New structure with whole areas replaced/added/removed; a value of
        None removes the area."""
        areas = dict(self.areas)
        for aid, area in area_changes.items():
            if area is None:
                areas.pop(aid, None)
            else:
                areas[aid] = area
        return OrgStructure(list(areas.values()))


# -- messages -------------------------------------------------------------------

@dataclass(frozen=True)
class AgentMessage:
    seq: int
    kind: str
    sender: str
    receiver: str
    correlation: str | None
    payload: dict

    def record(self) -> dict:
        return {
            "correlation": self.correlation,
            "kind": self.kind,
            "payload": dict(sorted(self.payload.items())),
            "receiver": self.receiver,
            "sender": self.sender,
            "seq": self.seq,
        }


class MessageLog:
    """Append-only, totally ordered message trace."""

    def __init__(self):
        self._messages: list[AgentMessage] = []
        self._corr = 0

    def correlation_id(self) -> str:
        self._corr += 1
        return f"cfp-{self._corr}"

    def send(self, kind: str, sender: str, receiver: str,
             correlation: str | None = None, **payload) -> AgentMessage:
        if kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {kind!r}")
        msg = AgentMessage(len(self._messages) + 1, kind, sender, receiver,
                           correlation, payload)
        self._messages.append(msg)
        return msg

    def __len__(self) -> int:
        return len(self._messages)

    def __iter__(self):
        return iter(self._messages)

    def for_receiver(self, agent_id: str) -> list[AgentMessage]:
        return [m for m in self._messages if m.receiver == agent_id]

    def export_lines(self) -> list[str]:
        """One canonical JSON record per message, for replay and audit."""
        return [
            json.dumps(m.record(), sort_keys=True, separators=(",", ":"))
            for m in self._messages
        ]


# -- resource ledgers ------------------------------------------------------------

@dataclass(frozen=True)
class Reservation:
    op_id: str
    item: str
    start: TimeInstant
    end: TimeInstant
    machine_id: str


class ResourceLedger:
    """Stock book for one resource kind in one area.

    Keeps what is still available and what has been taken into account:
    tool and jig reservations never exceed stock at any instant and return
    to stock at completion. Materials are consumed at completion, so each
    live material reservation claims a unit outright.
    """

    def __init__(self, kind: str, stock: dict[str, int] | None = None):
        if kind not in RESOURCE_KINDS:
            raise ValueError(f"unknown resource kind {kind!r}")
        self.kind = kind
        self.initial: dict[str, int] = dict(stock or {})
        self.stock: dict[str, int] = dict(stock or {})
        self.reservations: list[Reservation] = []
        self.consumed: Counter = Counter()
        self.destroyed: Counter = Counter()

    def stocks(self, item: str) -> bool:
        return item in self.initial

    def _peak(self, item: str, start: TimeInstant, end: TimeInstant) -> int:
        """Highest concurrent reservation count for the item inside the
        interval; the maximum sits at an interval or reservation start."""
        overlapping = [
            r for r in self.reservations
            if r.item == item and r.start < end and start < r.end
        ]
        peak = 0
        for point in {start, *(r.start for r in overlapping)}:
            if not start <= point < end:
                continue
            peak = max(peak, sum(1 for r in overlapping if r.start <= point < r.end))
        return peak

    def _claimed(self, item: str, start: TimeInstant, end: TimeInstant) -> int:
        """Units already spoken for against a new reservation over the
        interval. Every live material reservation ends in consumption, so
        it claims a unit outright; tools and jigs only block while held."""
        if self.kind == "material":
            return sum(1 for r in self.reservations if r.item == item)
        return self._peak(item, start, end)

    def can_reserve(self, item: str, start: TimeInstant, end: TimeInstant) -> bool:
        return self.stock.get(item, 0) - self._claimed(item, start, end) >= 1

    def reserve(self, op_id: str, item: str, start: TimeInstant,
                end: TimeInstant, machine_id: str) -> bool:
        if not self.can_reserve(item, start, end):
            return False
        self.reservations.append(Reservation(op_id, item, start, end, machine_id))
        return True

    def release(self, op_id: str) -> list[Reservation]:
        freed = [r for r in self.reservations if r.op_id == op_id]
        self.reservations = [r for r in self.reservations if r.op_id != op_id]
        return freed

    def finish(self, op_id: str) -> list[Reservation]:
        """Close the operation's reservations: materials leave the stock,
        tools and jigs come back."""
        done = self.release(op_id)
        if self.kind == "material":
            for r in done:
                self.stock[r.item] -= 1
                self.consumed[r.item] += 1
        return done

    def disturb(self, item: str, at: TimeInstant) -> list[Reservation]:
        """One item breaks at the given instant. Stock drops; if the active
        reservations no longer fit, the latest-starting ones are voided until
        they do. Returns the voided reservations."""
        if self.stock.get(item, 0) <= 0:
            raise ValueError(f"no {item!r} in stock to destroy")
        self.stock[item] -= 1
        self.destroyed[item] += 1
        voided: list[Reservation] = []
        while True:
            over = self._first_violation(item)
            if over is None:
                break
            victim = max(over, key=lambda r: (r.start, r.op_id))
            self.reservations.remove(victim)
            voided.append(victim)
        return voided

    def _first_violation(self, item: str) -> list[Reservation] | None:
        held = [r for r in self.reservations if r.item == item]
        limit = self.stock.get(item, 0)
        if self.kind == "material":
            return held if len(held) > limit else None
        for point in sorted({r.start for r in held}):
            over = [r for r in held if r.start <= point < r.end]
            if len(over) > limit:
                return over
        return None

    def verify(self) -> None:
        """Conservation and capacity sweep; raises on the first breach."""
        for item, start in self.initial.items():
            want = start - self.consumed[item] - self.destroyed[item]
            if self.stock.get(item, 0) != want:
                raise AssertionError(
                    f"{self.kind} {item!r}: stock {self.stock.get(item, 0)} != "
                    f"initial {start} - consumed {self.consumed[item]} "
                    f"- destroyed {self.destroyed[item]}"
                )
            if self._first_violation(item) is not None:
                raise AssertionError(f"{self.kind} {item!r}: reservations exceed stock")


# -- logistics --------------------------------------------------------------------

@dataclass(frozen=True)
class TransportSlot:
    op_id: str
    from_machine: str
    to_machine: str
    depart: TimeInstant
    arrive: TimeInstant


class LogisticLedger:
    """Transport schedule of one area: fixed transit minutes into the area
    and a bounded number of simultaneous transfers."""

    def __init__(self, area_id: str, transit_minutes: Duration = 0, capacity: int = 1):
        self.area_id = area_id
        self.transit_minutes = transit_minutes
        self.capacity = capacity
        self.bookings: list[TransportSlot] = []

    def concurrent(self, start: TimeInstant, end: TimeInstant) -> int:
        active = [b for b in self.bookings if b.depart < end and start < b.arrive]
        peak = 0
        for point in {start, *(b.depart for b in active)}:
            if start <= point < end:
                peak = max(peak, sum(1 for b in active if b.depart <= point < b.arrive))
        return peak

    def earliest_slot(self, op_id: str, from_machine: str, to_machine: str,
                      ready: TimeInstant, needed_by: TimeInstant) -> TransportSlot | None:
        """First transfer window with capacity left, departing at the ready
        time or later and arriving by the deadline."""
        transit = self.transit_minutes
        if transit == 0:
            return TransportSlot(op_id, from_machine, to_machine, ready, ready)
        depart = ready
        while depart + transit <= needed_by:
            if self.concurrent(depart, depart + transit) < self.capacity:
                return TransportSlot(op_id, from_machine, to_machine, depart, depart + transit)
            blockers = [
                b.arrive for b in self.bookings
                if b.depart < depart + transit and depart < b.arrive
            ]
            if not blockers:
                return None
            depart = min(a for a in blockers if a > depart)
        return None

    def book(self, slot: TransportSlot) -> None:
        self.bookings.append(slot)

    def release(self, op_id: str) -> list[TransportSlot]:
        freed = [b for b in self.bookings if b.op_id == op_id]
        self.bookings = [b for b in self.bookings if b.op_id != op_id]
        return freed


# -- structure edits -----------------------------------------------------------------

@dataclass(frozen=True)
class StructureEdit:
    """One system-editing action: add or remove an area, or add, move or
    remove a machine."""

    action: str  # add-area | remove-area | add-machine | move-machine | remove-machine
    area_id: str | None = None
    machine: Machine | None = None
    machine_id: str | None = None
    parent: str | None = None
    level: int | None = None
    transit_minutes: Duration = 0
    transport_capacity: int = 1


class Shop:
    """The engine facade: plan, fleet, order book, areas, ledgers, messages.

    Wires the resource hooks of the dispatch context so every award books
    tools, jigs, materials and transport atomically, and every rollback
    releases them again.
    """

    def __init__(self, machines, orders=(), *, org: OrgStructure | None = None,
                 stock: dict | None = None, now: TimeInstant = 0,
                 horizon: TimeInstant = 8 * 7 * 24 * 60,
                 weights: WeightConfig | None = None,
                 escalation_interval: Duration = DEFAULT_ESCALATION_INTERVAL):
        self.machines: dict[str, Machine] = {m.id: m for m in machines}
        self.org = org or OrgStructure.single_area(self.machines)
        known = self.org.machines_under(self.org.root.id)
        if set(self.machines) - known:
            raise ValueError(
                f"machines outside every area: {sorted(set(self.machines) - known)}")
        if known - set(self.machines):
            raise ValueError(
                f"areas reference unknown machines: {sorted(known - set(self.machines))}")
        self.messages = MessageLog()
        self.assignment: dict[str, str] = {}  # order id -> home area id
        self.restrictions: dict[str, frozenset[str]] = {}  # order id -> excluded areas
        self.ledgers: dict[tuple[str, str], ResourceLedger] = {}
        self.logistics: dict[str, LogisticLedger] = {}
        for area in self.org.areas.values():
            self.logistics[area.id] = LogisticLedger(
                area.id, area.transit_minutes, area.transport_capacity,
            )
            for kind in RESOURCE_KINDS:
                per_area = (stock or {}).get(area.id, {})
                self.ledgers[(area.id, kind)] = ResourceLedger(kind, per_area.get(kind))
        self._fail_point: str | None = None  # test hook: abort awards mid-way

        self.ctx = _ShopContext(
            self, Plan(), self.machines, {}, now=now, horizon=horizon,
            weights=weights, escalation_interval=escalation_interval,
        )
        self.ctx.feasible = self._feasible
        self.ctx.book = self._book
        self.ctx.unbook = self._unbook
        self.ctx.transit = self.transit
        self.ctx.ready_at = self._ready_at
        self.ctx.scopes = self._scopes
        for order in orders:
            self.mma_create_job(order)

    # -- convenience views ------------------------------------------------

    @property
    def plan(self) -> Plan:
        return self.ctx.plan

    @property
    def orders(self) -> dict[str, Order]:
        return self.ctx.orders

    def ledger(self, area_id: str, kind: str) -> ResourceLedger:
        return self.ledgers[(area_id, kind)]

    def validate(self) -> ValidationReport:
        return validate_plan(self.plan, self.orders, self.machines,
                             transit=self.transit,
                             reservations=self.missing_reservations)

    def verify_ledgers(self) -> None:
        for ledger in self.ledgers.values():
            ledger.verify()

    # -- hook implementations ----------------------------------------------

    def transit(self, from_machine: str, to_machine: str) -> Duration:
        if from_machine == to_machine:
            return 0
        return self.org.leaf_of(to_machine).transit_minutes

    def _scopes(self, order: Order) -> list[frozenset[str]]:
        home = self.assignment.get(order.id, self.org.root.id)
        excluded = self.restrictions.get(order.id, frozenset())
        chain = [a for a in self.org.chain(home) if a.id not in excluded]
        if not chain:
            chain = [self.org.root]
        return [self.org.machines_under(a.id) for a in chain]

    def _ledger_for(self, machine_id: str, kind: str, item: str) -> ResourceLedger | None:
        # nearest enclosing area that stocks the item type at all
        for area in self.org.chain(self.org.leaf_of(machine_id).id):
            ledger = self.ledgers[(area.id, kind)]
            if ledger.stocks(item):
                return ledger
        return None

    def _feasible(self, op: Operation, machine_id: str,
                  start: TimeInstant, end: TimeInstant) -> bool:
        for kind, item in op.resources:
            ledger = self._ledger_for(machine_id, kind, item)
            if ledger is None or not ledger.can_reserve(item, start, end):
                return False
        return True

    def _binding_predecessor(self, op: Operation, first_start: TimeInstant,
                             machine_id: str) -> Slot | None:
        """The placed predecessor-stage slot whose end plus transit reaches
        furthest; None when no cross-machine transfer is needed."""
        order = self.orders.get(op.order_id)
        if order is None:
            return None
        stages = order.stages()
        index = next(
            (i for i, stage in enumerate(stages) if any(o.id == op.id for o in stage)),
            None,
        )
        if index is None or index == 0:
            return None
        best: Slot | None = None
        for pred in stages[index - 1]:
            for slot in self.plan.op_slots(pred.id):
                if slot.machine_id == machine_id:
                    continue
                if self.transit(slot.machine_id, machine_id) == 0:
                    continue
                key = slot.end + self.transit(slot.machine_id, machine_id)
                if best is None or key > best.end + self.transit(best.machine_id, machine_id):
                    best = slot
        return best

    def _ready_at(self, op: Operation, machine_id: str,
                  lower: TimeInstant) -> TimeInstant:
        """Earliest start once transport capacity is accounted for. When every
        vehicle is out the proposal moves to the next free departure."""
        pred = self._binding_predecessor(op, lower, machine_id)
        if pred is None:
            return lower
        area = self.org.leaf_of(machine_id).id
        transport = self.logistics[area].earliest_slot(
            op.id, pred.machine_id, machine_id, pred.end, self.ctx.horizon,
        )
        if transport is None:
            return lower
        return max(lower, transport.arrive)

    def _book(self, op: Operation, slots: list[Slot]) -> bool:
        first_start = min(s.start for s in slots)
        last_end = max(s.end for s in slots)
        machine_id = min(slots, key=lambda s: s.start).machine_id
        ma = f"ma:{machine_id}"
        undo: list = []
        pending: list[tuple] = []

        def abort() -> bool:
            for entry in undo:
                entry()
            return False

        for kind in RESOURCE_KINDS:
            for want_kind, item in op.resources:
                if want_kind != kind:
                    continue
                ledger = self._ledger_for(machine_id, kind, item)
                if ledger is None or not ledger.reserve(
                        op.id, item, first_start, last_end, machine_id):
                    return abort()
                undo.append(lambda lg=ledger: lg.release(op.id))
                area = next(a for (a, k), lg in self.ledgers.items() if lg is ledger)
                pending.append((
                    "reservation", ma, f"{_SUPPLY_PREFIX[kind]}:{area}",
                    {"operation": op.id, "item": item,
                     "start": first_start, "end": last_end},
                ))
            if self._fail_point == kind:
                return abort()

        pred = self._binding_predecessor(op, first_start, machine_id)
        if pred is not None:
            area = self.org.leaf_of(machine_id).id
            ledger = self.logistics[area]
            transport = ledger.earliest_slot(
                op.id, pred.machine_id, machine_id, pred.end, first_start,
            )
            if transport is None:
                return abort()
            ledger.book(transport)
            undo.append(lambda lg=ledger: lg.release(op.id))
            pending.append((
                "reservation", ma, f"la:{area}",
                {"operation": op.id, "from": transport.from_machine,
                 "to": transport.to_machine, "depart": transport.depart,
                 "arrive": transport.arrive},
            ))
        if self._fail_point == "transport":
            return abort()

        order = self.orders.get(op.order_id)
        joa = f"joa:{op.order_id}" if order is not None else "mma"
        if not self.ctx.quiet:
            self.messages.send("award", joa, ma, None, operation=op.id,
                               start=first_start, end=last_end)
            for kind, sender, receiver, payload in pending:
                self.messages.send(kind, sender, receiver, None, **payload)
        return True

    def _unbook(self, op_id: str) -> None:
        for (area, kind), ledger in self.ledgers.items():
            for freed in ledger.release(op_id):
                if self.ctx.quiet:
                    continue
                self.messages.send(
                    "release", f"ma:{freed.machine_id}", f"{_SUPPLY_PREFIX[kind]}:{area}",
                    None, operation=op_id, item=freed.item,
                )
        for area, ledger in self.logistics.items():
            for freed in ledger.release(op_id):
                if self.ctx.quiet:
                    continue
                self.messages.send(
                    "release", f"ma:{freed.to_machine}", f"la:{area}",
                    None, operation=op_id,
                )

    def missing_reservations(self, slot: Slot) -> list[tuple[str, str]]:
        if slot.end <= self.ctx.now:
            return []  # finished work: materials consumed, tools returned
        op = self._operation(slot.op_id)
        if op is None:
            return []
        missing = []
        for kind, item in op.resources:
            covered = any(
                r.op_id == op.id and r.item == item
                and r.start <= slot.start and slot.end <= r.end
                for ledger in self.ledgers.values() if ledger.kind == kind
                for r in ledger.reservations
            )
            if not covered:
                missing.append((kind, item))
        return missing

    def _operation(self, op_id: str) -> Operation | None:
        for order in self.orders.values():
            for op in order.operations:
                if op.id == op_id:
                    return op
        return None

    # -- ledger snapshots for transactional dispatch -------------------------

    def _ledger_snapshot(self):
        return (
            {key: (dict(lg.stock), list(lg.reservations),
                   Counter(lg.consumed), Counter(lg.destroyed))
             for key, lg in self.ledgers.items()},
            {aid: list(lg.bookings) for aid, lg in self.logistics.items()},
        )

    def _ledger_restore(self, token) -> None:
        resources, transports = token
        for key, (stock, reservations, consumed, destroyed) in resources.items():
            ledger = self.ledgers[key]
            ledger.stock = dict(stock)
            ledger.reservations = list(reservations)
            ledger.consumed = Counter(consumed)
            ledger.destroyed = Counter(destroyed)
        for aid, bookings in transports.items():
            self.logistics[aid].bookings = list(bookings)

    # -- system editing -------------------------------------------------------

    def sea_define(self, edit: StructureEdit) -> OrgStructure:
        """Apply one structure edit and swap in the new organization."""
        if edit.action == "add-area":
            area = Area(edit.area_id, edit.level, parent=edit.parent,
                        transit_minutes=edit.transit_minutes,
                        transport_capacity=edit.transport_capacity)
            self.org = self.org.edited(**{edit.area_id: area})
            self.logistics.setdefault(edit.area_id, LogisticLedger(
                edit.area_id, area.transit_minutes, area.transport_capacity))
            for kind in RESOURCE_KINDS:
                self.ledgers.setdefault((edit.area_id, kind), ResourceLedger(kind))
        elif edit.action == "remove-area":
            area = self.org.areas[edit.area_id]
            if self.org.machines_under(edit.area_id):
                raise ValueError(f"area {edit.area_id} still holds machines")
            if self.org.children(edit.area_id):
                raise ValueError(f"area {edit.area_id} still has child areas")
            self.org = self.org.edited(**{edit.area_id: None})
        elif edit.action == "add-machine":
            machine = edit.machine
            area = self.org.areas[edit.area_id]
            self.machines[machine.id] = machine
            self.org = self.org.edited(**{area.id: replace(
                area, machine_ids=area.machine_ids | {machine.id})})
        elif edit.action == "move-machine":
            old = self.org.leaf_of(edit.machine_id)
            new = self.org.areas[edit.area_id]
            self.org = self.org.edited(**{
                old.id: replace(old, machine_ids=old.machine_ids - {edit.machine_id}),
                new.id: replace(new, machine_ids=new.machine_ids | {edit.machine_id}),
            })
        elif edit.action == "remove-machine":
            future = [
                s for s in self.plan.machine_slots(edit.machine_id)
                if s.end > self.ctx.now
            ]
            if future:
                raise ValueError(
                    f"machine {edit.machine_id} has {len(future)} booked slots; "
                    "re-dispatch them first"
                )
            area = self.org.leaf_of(edit.machine_id)
            self.org = self.org.edited(**{area.id: replace(
                area, machine_ids=area.machine_ids - {edit.machine_id})})
            del self.machines[edit.machine_id]
        else:
            raise ValueError(f"unknown structure edit {edit.action!r}")
        return self.org

    # -- order intake and negotiation -----------------------------------------

    def mma_create_job(self, order: Order, *,
                       excluded_areas: frozenset[str] = frozenset()) -> str:
        """Register an order and allocate it to the most specific area whose
        machines cover every operation. No covering area sends the order to
        the manual queue."""
        if order.id in self.orders:
            raise ValueError(f"order {order.id} already exists")
        if order.arrival is None:
            order.arrival = max(order.release, self.ctx.now)
        self.orders[order.id] = order
        if excluded_areas:
            self.restrictions[order.id] = frozenset(excluded_areas)
        candidates = []
        for area in self.org.areas.values():
            if area.id in excluded_areas:
                continue
            machines = self.org.machines_under(area.id)
            # coverage is structural: a machine that is down right now still
            # counts, availability is the dispatcher's problem
            if all(
                filter_machines(op, self.machines, machines, include_down=True)
                for op in order.operations
            ):
                candidates.append((-area.level, len(machines), area.id))
        if candidates:
            candidates.sort()
            self.assignment[order.id] = candidates[0][2]
        else:
            order.state = OrderState.MANUAL
        return f"joa:{order.id}"

    def status_query(self, order_id: str) -> AgentMessage:
        """MMA asks the order's agent for per-operation state."""
        order = self.orders[order_id]
        joa = f"joa:{order_id}"
        query = self.messages.send("status-query", "mma", joa, None, order=order_id)
        ops = {}
        for op in order.operations:
            slots = self.plan.op_slots(op.id)
            ops[op.id] = {
                "placed": bool(slots),
                "slots": [(s.machine_id, s.start, s.end) for s in slots],
            }
        return self.messages.send(
            "status-reply", joa, "mma", query.correlation,
            order=order_id, state=order.state.value, operations=ops,
        )

    def joa_negotiate(self, order_id: str, op_id: str, level: int = 0,
                      *, window_end: TimeInstant | None = None) -> Proposal | None:
        """Contract-net round for one operation at one scope level: call for
        proposals, collect, award the best total index. The award books the
        slot and all reservations atomically; None means zero proposals or
        every award declined. window_end caps proposal completion, so a
        machine that can only finish later declines."""
        order = self.orders[order_id]
        op = order.operation(op_id)
        scopes = self._scopes(order)
        scope = scopes[min(level, len(scopes) - 1)]
        joa = f"joa:{order_id}"
        corr = self.messages.correlation_id()
        ranked: list[tuple] = []
        for machine in filter_machines(op, self.machines, scope):
            self.messages.send("call-for-proposal", joa, f"ma:{machine.id}",
                               corr, operation=op_id)
            prop = machine_proposal(self.ctx, op, order, machine,
                                    window_end=window_end)
            if prop is None:
                continue  # the machine or its supply agents decline
            self.messages.send(
                "proposal", f"ma:{machine.id}", joa, corr,
                operation=op_id, start=prop.start, end=prop.end,
                total=round(prop.total, 6),
            )
            ranked.append((-prop.total, prop.start, machine.id, prop))
        ranked.sort()
        winner: Proposal | None = None
        for _, _, machine_id, prop in ranked:
            if winner is None and _award(
                    self.ctx, op, [Slot(op.id, machine_id, prop.start, prop.end)]):
                winner = prop
            elif winner is not None:
                self.messages.send("reject", joa, f"ma:{machine_id}", corr,
                                   operation=op_id)
        return winner

    def negotiate_order(self, order_id: str, *,
                        on_exhausted: str = "manual") -> DispatchOutcome:
        """Dispatch a whole order by per-operation negotiation, widening the
        scope one level at a time. A level-1 failure sends the order to the
        manual queue or the waiting pool."""
        order = self.orders[order_id]
        token = self.ctx.snapshot()
        levels = len(self._scopes(order))
        due_cap = min(self.ctx.horizon, order.due)
        placed: list[Slot] = []
        for stage in order.stages():
            for op in stage:
                winner = None
                for level in range(levels):
                    winner = self.joa_negotiate(order_id, op.id, level,
                                                window_end=due_cap)
                    if winner is not None:
                        break
                    if level + 1 < levels:
                        self.ctx.emit("escalation", {
                            "order": order_id, "operation": op.id, "to_level": level,
                        })
                if winner is None and due_cap < self.ctx.horizon:
                    # nobody makes the due date; take the best late offer
                    winner = self.joa_negotiate(order_id, op.id, levels - 1)
                if winner is None:
                    for placed_id in sorted({s.op_id for s in placed}):
                        self.ctx.unbook(placed_id)
                    self.ctx.rollback(token)
                    if on_exhausted == "wait-x":
                        deadline = max(order.due,
                                       self.ctx.now + self.ctx.escalation_interval)
                        return enqueue_wait_x(order, deadline, self.ctx)
                    order.state = OrderState.MANUAL
                    return DispatchOutcome("failed",
                                           reason=f"no proposals for {op.id}")
                placed.extend(self.plan.op_slots(op.id))
        order.state = OrderState.DISPATCHED
        return DispatchOutcome("placed", slots=tuple(placed))

    def dispatch(self, order_id: str, request: DispatchRequest | None = None) -> DispatchOutcome:
        """Run one of the index strategies for a registered order."""
        order = self.orders[order_id]
        request = request or DispatchRequest(order_id, strategy="Force")
        return run_strategy(order, self.ctx, request)

    def optimize(self, config: OptimizerConfig | None = None) -> OptimizationRun:
        """Search for a shorter schedule; reservations, messages and the live
        plan stay untouched until the run is accepted."""
        return _optimize(self.ctx, config, validator=self.validate)

    def decide_optimization(self, run: OptimizationRun, decision: str) -> Plan:
        return accept_or_restore(self.ctx, run, decision, validator=self.validate)

    # -- runtime resource events ------------------------------------------------

    def resource_disturb(self, area_id: str, kind: str, item: str,
                         at: TimeInstant) -> list[str]:
        """An item breaks: drop it from stock, void reservations that no
        longer fit, and message the machine and order agents affected.
        Returns the affected operation ids."""
        ledger = self.ledgers[(area_id, kind)]
        supply = f"{_SUPPLY_PREFIX[kind]}:{area_id}"
        voided = ledger.disturb(item, at)
        affected = []
        for res in voided:
            ma = f"ma:{res.machine_id}"
            self.messages.send("disturbance", supply, ma, None,
                               item=item, operation=res.op_id, at=at)
            op = self._operation(res.op_id)
            if op is not None:
                self.messages.send("disturbance", ma, f"joa:{op.order_id}", None,
                                   item=item, operation=res.op_id, at=at)
            affected.append(res.op_id)
        return affected

    def la_check_transfer(self, from_machine: str, to_machine: str,
                          op_id: str, ready: TimeInstant,
                          needed_by: TimeInstant) -> TransportSlot | None:
        """Feasibility probe for one transfer; does not book."""
        if from_machine == to_machine:
            return TransportSlot(op_id, from_machine, to_machine, ready, ready)
        area = self.org.leaf_of(to_machine).id
        return self.logistics[area].earliest_slot(
            op_id, from_machine, to_machine, ready, needed_by)

    def complete_op(self, op_id: str, actual_duration: Duration) -> None:
        """Close out a finished operation: consume materials, return tools
        and jigs, and fold the actual runtime into the machine's average."""
        slots = self.plan.op_slots(op_id)
        for ledger in self.ledgers.values():
            ledger.finish(op_id)
        if slots:
            machine = self.machines[slots[0].machine_id]
            machine.apt = update_apt(machine.apt, actual_duration, machine.apt_samples)
            machine.apt_samples += 1


_SUPPLY_PREFIX = {"tool": "ta", "jig": "ja", "material": "mta"}


class _ShopContext(DispatchContext):
    """Dispatch context whose transactions also cover the shop's ledgers."""

    def __init__(self, shop: Shop, *args, **kw):
        super().__init__(*args, **kw)
        self._shop = shop

    def snapshot(self):
        return (super().snapshot(), self._shop._ledger_snapshot())

    def rollback(self, token) -> None:
        base, ledgers = token
        super().rollback(base)
        self._shop._ledger_restore(ledgers)
