"""Scenario files: the self-contained description of one shop-floor run.

A scenario carries the fleet, the organizational tree, the order book with
arrival times, resource stocks, a scripted disturbance list, and the engine
configuration. The on-disk form is canonical JSON (sorted keys, two-space
indent, trailing newline) so files diff cleanly and parse -> serialize is
byte-identical for canonical files.

Parsing is strict: unknown fields, wrong types, and dangling references are
rejected with the offending field path in the message.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .agents import Area, OrgStructure, RESOURCE_KINDS, Shop
from .dispatch import (
    DEFAULT_ESCALATION_INTERVAL,
    DEFAULT_LONG_SPLIT_X,
    DEFAULT_LONG_SPLIT_Y,
    DEFAULT_OVERDRAFT_LIMIT,
    DispatchOptions,
    DispatchRequest,
)
from .indexes import WeightConfig
from .model import (
    CapabilityVector,
    Duration,
    Machine,
    Operation,
    Order,
    OrderState,
    ShiftCalendar,
    Strategy,
    TimeInstant,
)
from .optimizer import DEFAULT_QUIET_PERIOD

FORMAT_VERSION = 1
DEFAULT_HORIZON = 4 * 7 * 24 * 60  # four weeks of minutes

DISTURBANCE_KINDS = ("machine-down", "tool-damage", "rush-order", "back-order")
_STRATEGIES = tuple(s.value for s in Strategy)


class ScenarioError(ValueError):
    """A scenario document was rejected; the message names the field path."""


def _fail(path: str, message: str) -> None:
    raise ScenarioError(f"{path}: {message}")


def _mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        _fail(path, f"expected an object, got {type(value).__name__}")
    return dict(value)


def _array(value, path: str) -> list:
    if not isinstance(value, list):
        _fail(path, f"expected an array, got {type(value).__name__}")
    return value


_MISSING = object()


def _take(mapping: dict, path: str, key: str, default=_MISSING):
    if key in mapping:
        return mapping.pop(key)
    if default is _MISSING:
        _fail(path, f"missing required field {key!r}")
    return default


def _done(mapping: dict, path: str) -> None:
    if mapping:
        _fail(path, f"unknown field {sorted(mapping)[0]!r}")


def _int(value, path: str, *, lo: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {type(value).__name__}")
    if lo is not None and value < lo:
        _fail(path, f"must be >= {lo}, got {value}")
    return value


def _float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _str(value, path: str) -> str:
    if not isinstance(value, str) or not value:
        _fail(path, "expected a non-empty string")
    return value


def _opt_str(value, path: str) -> str | None:
    if value is None:
        return None
    return _str(value, path)


def _bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        _fail(path, f"expected true or false, got {type(value).__name__}")
    return value


def _str_list(value, path: str) -> list[str]:
    return [_str(v, f"{path}[{i}]") for i, v in enumerate(_array(value, path))]


# -- document pieces -----------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    horizon: TimeInstant = DEFAULT_HORIZON
    seed: int = 0
    quiet_period: Duration = DEFAULT_QUIET_PERIOD
    auto_accept_optimizations: bool = False
    escalation_interval: Duration = DEFAULT_ESCALATION_INTERVAL
    overdraft_limit: Duration = DEFAULT_OVERDRAFT_LIMIT
    long_split_x: Duration = DEFAULT_LONG_SPLIT_X
    long_split_y: Duration = DEFAULT_LONG_SPLIT_Y
    weights: WeightConfig = field(default_factory=WeightConfig)

    def options(self) -> DispatchOptions:
        return DispatchOptions(
            overdraft_limit=self.overdraft_limit,
            long_split_x=self.long_split_x,
            long_split_y=self.long_split_y,
        )


@dataclass(frozen=True)
class OrderSpec:
    """An order template plus the dispatch request it arrives with."""

    order: Order
    strategy: str = "Force"
    x_threshold: int | None = None
    deadline: TimeInstant | None = None
    excluded_areas: frozenset[str] = frozenset()

    def fresh(self) -> Order:
        """A pristine copy for one engine run; templates are never dispatched."""
        return replace(self.order, state=OrderState.PENDING, failure_reason=None)

    def request(self, config: ScenarioConfig) -> DispatchRequest:
        return DispatchRequest(
            self.order.id, strategy=self.strategy, x_threshold=self.x_threshold,
            deadline=self.deadline, options=config.options(),
            weights=config.weights,
        )


@dataclass(frozen=True)
class Disturbance:
    kind: str
    at: TimeInstant
    machine: str | None = None
    until: TimeInstant | None = None
    area: str | None = None
    resource: str | None = None
    item: str | None = None
    order: str | None = None
    rush: OrderSpec | None = None
    extend_due: Duration | None = None


@dataclass(frozen=True)
class Scenario:
    version: int
    name: str
    machines: tuple[Machine, ...]
    org: OrgStructure
    order_specs: tuple[OrderSpec, ...]
    stock: dict
    disturbances: tuple[Disturbance, ...]
    config: ScenarioConfig

    def build_shop(self) -> Shop:
        """A fresh Shop for one run; the scenario itself stays immutable."""
        machines = [replace(m) for m in self.machines]
        stock = {area: {kind: dict(items) for kind, items in kinds.items()}
                 for area, kinds in self.stock.items()}
        return Shop(
            machines, org=self.org, stock=stock,
            horizon=self.config.horizon, weights=self.config.weights,
            escalation_interval=self.config.escalation_interval,
        )

    def spec_for(self, order_id: str) -> OrderSpec | None:
        for spec in self.order_specs:
            if spec.order.id == order_id:
                return spec
        for d in self.disturbances:
            if d.rush is not None and d.rush.order.id == order_id:
                return d.rush
        return None


# -- parsing --------------------------------------------------------------------

def _parse_capability(doc, path: str) -> CapabilityVector:
    doc = _mapping(doc, path)
    graded_doc = _mapping(_take(doc, path, "graded", {}), f"{path}.graded")
    graded = {name: _float(v, f"{path}.graded.{name}")
              for name, v in graded_doc.items()}
    binary = _str_list(_take(doc, path, "binary", []), f"{path}.binary")
    processes = _str_list(_take(doc, path, "processes", []), f"{path}.processes")
    _done(doc, path)
    try:
        return CapabilityVector.build(graded, set(binary), set(processes))
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_calendar(doc, path: str) -> ShiftCalendar:
    windows = []
    for i, pair in enumerate(_array(doc, path)):
        pair = _array(pair, f"{path}[{i}]")
        if len(pair) != 2:
            _fail(f"{path}[{i}]", "expected a [start, end] pair")
        windows.append((_int(pair[0], f"{path}[{i}][0]", lo=0),
                        _int(pair[1], f"{path}[{i}][1]", lo=0)))
    try:
        return ShiftCalendar(week=tuple(windows))
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_machine(doc, path: str) -> Machine:
    doc = _mapping(doc, path)
    mid = _str(_take(doc, path, "id"), f"{path}.id")
    area = _str(_take(doc, path, "area"), f"{path}.area")
    capability = _parse_capability(_take(doc, path, "capability"), f"{path}.capability")
    calendar = _parse_calendar(_take(doc, path, "calendar"), f"{path}.calendar")
    setup_family = _opt_str(_take(doc, path, "setup_family", None), f"{path}.setup_family")
    apt = _int(_take(doc, path, "apt", 60), f"{path}.apt", lo=1)
    _done(doc, path)
    return Machine(id=mid, area=area, capability=capability, calendar=calendar,
                   setup_family=setup_family, apt=apt)


def _parse_area(doc, path: str) -> Area:
    doc = _mapping(doc, path)
    fields = dict(
        id=_str(_take(doc, path, "id"), f"{path}.id"),
        level=_int(_take(doc, path, "level"), f"{path}.level", lo=1),
        parent=_opt_str(_take(doc, path, "parent", None), f"{path}.parent"),
        machine_ids=frozenset(_str_list(_take(doc, path, "machines", []),
                                        f"{path}.machines")),
        transit_minutes=_int(_take(doc, path, "transit_minutes", 0),
                             f"{path}.transit_minutes", lo=0),
        transport_capacity=_int(_take(doc, path, "transport_capacity", 1),
                                f"{path}.transport_capacity", lo=1),
    )
    _done(doc, path)
    try:
        return Area(**fields)
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_operation(doc, path: str, order_id: str) -> Operation:
    doc = _mapping(doc, path)
    resources = []
    for i, pair in enumerate(_array(_take(doc, path, "resources", []), f"{path}.resources")):
        pair = _array(pair, f"{path}.resources[{i}]")
        if len(pair) != 2:
            _fail(f"{path}.resources[{i}]", "expected a [kind, item] pair")
        kind = _str(pair[0], f"{path}.resources[{i}][0]")
        if kind not in RESOURCE_KINDS:
            _fail(f"{path}.resources[{i}][0]",
                  f"unknown resource kind {kind!r}, expected one of {sorted(RESOURCE_KINDS)}")
        resources.append((kind, _str(pair[1], f"{path}.resources[{i}][1]")))
    fields = dict(
        id=_str(_take(doc, path, "id"), f"{path}.id"),
        order_id=order_id,
        seq=_int(_take(doc, path, "seq"), f"{path}.seq", lo=0),
        process=_str(_take(doc, path, "process"), f"{path}.process"),
        requirement=_parse_capability(_take(doc, path, "requirement", {}),
                                      f"{path}.requirement"),
        duration=_int(_take(doc, path, "duration"), f"{path}.duration", lo=1),
        robustness=_int(_take(doc, path, "robustness", 0), f"{path}.robustness", lo=0),
        setup_family=_opt_str(_take(doc, path, "setup_family", None),
                              f"{path}.setup_family"),
        lots=_int(_take(doc, path, "lots", 1), f"{path}.lots", lo=1),
        resources=tuple(resources),
        alternatives=tuple(_str_list(_take(doc, path, "alternatives", []),
                                     f"{path}.alternatives")),
    )
    _done(doc, path)
    try:
        return Operation(**fields)
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_order(doc, path: str, *, rush: bool = False) -> OrderSpec:
    doc = _mapping(doc, path)
    oid = _str(_take(doc, path, "id"), f"{path}.id")
    ops_doc = _array(_take(doc, path, "operations"), f"{path}.operations")
    if not ops_doc:
        _fail(f"{path}.operations", "order needs at least one operation")
    operations = tuple(_parse_operation(op, f"{path}.operations[{i}]", oid)
                       for i, op in enumerate(ops_doc))
    release = _int(_take(doc, path, "release", 0), f"{path}.release", lo=0)
    fields = dict(
        id=oid,
        priority=_int(_take(doc, path, "priority", 3), f"{path}.priority"),
        release=release,
        due=_int(_take(doc, path, "due"), f"{path}.due", lo=1),
        operations=operations,
        arrival=_int(_take(doc, path, "arrival", release), f"{path}.arrival", lo=0),
    )
    if rush:
        strategy, x_threshold, deadline = "X-Competition", fields["priority"], None
        excluded: frozenset[str] = frozenset()
    else:
        strategy = _str(_take(doc, path, "strategy", "Force"), f"{path}.strategy")
        if strategy not in _STRATEGIES:
            _fail(f"{path}.strategy",
                  f"unknown strategy {strategy!r}, expected one of {list(_STRATEGIES)}")
        x_threshold = _take(doc, path, "x_threshold", None)
        if x_threshold is not None:
            x_threshold = _int(x_threshold, f"{path}.x_threshold", lo=1)
        deadline = _take(doc, path, "deadline", None)
        if deadline is not None:
            deadline = _int(deadline, f"{path}.deadline", lo=0)
        excluded = frozenset(_str_list(_take(doc, path, "excluded_areas", []),
                                       f"{path}.excluded_areas"))
    _done(doc, path)
    try:
        template = Order(**fields)
    except ValueError as exc:
        _fail(path, str(exc))
    if template.arrival < template.release:
        _fail(f"{path}.arrival", "arrival before release")
    if strategy == "X-Competition" and x_threshold is None:
        _fail(f"{path}.x_threshold", "X-Competition needs a threshold")
    if strategy != "X-Competition" and x_threshold is not None:
        _fail(f"{path}.x_threshold", "only X-Competition takes a threshold")
    return OrderSpec(order=template, strategy=strategy, x_threshold=x_threshold,
                     deadline=deadline, excluded_areas=excluded)


def _parse_disturbance(doc, path: str) -> Disturbance:
    doc = _mapping(doc, path)
    kind = _str(_take(doc, path, "kind"), f"{path}.kind")
    if kind not in DISTURBANCE_KINDS:
        _fail(f"{path}.kind",
              f"unknown disturbance {kind!r}, expected one of {list(DISTURBANCE_KINDS)}")
    at = _int(_take(doc, path, "at"), f"{path}.at", lo=0)
    out: dict = {"kind": kind, "at": at}
    if kind == "machine-down":
        out["machine"] = _str(_take(doc, path, "machine"), f"{path}.machine")
        until = _take(doc, path, "until", None)
        if until is not None:
            until = _int(until, f"{path}.until", lo=0)
            if until <= at:
                _fail(f"{path}.until", "repair time must be after the failure")
        out["until"] = until
    elif kind == "tool-damage":
        out["area"] = _str(_take(doc, path, "area"), f"{path}.area")
        resource = _str(_take(doc, path, "resource", "tool"), f"{path}.resource")
        if resource not in RESOURCE_KINDS:
            _fail(f"{path}.resource", f"unknown resource kind {resource!r}")
        out["resource"] = resource
        out["item"] = _str(_take(doc, path, "item"), f"{path}.item")
    elif kind == "rush-order":
        out["rush"] = _parse_order(_take(doc, path, "order"), f"{path}.order", rush=True)
    else:  # back-order
        out["order"] = _str(_take(doc, path, "order"), f"{path}.order")
        out["extend_due"] = _int(_take(doc, path, "extend_due"),
                                 f"{path}.extend_due", lo=1)
    _done(doc, path)
    return Disturbance(**out)


def _parse_config(doc, path: str) -> ScenarioConfig:
    doc = _mapping(doc, path)
    weights_doc = _mapping(_take(doc, path, "weights", {}), f"{path}.weights")
    weights_fields = {}
    for name in ("machine", "robustness", "position", "setup", "timeslot"):
        if name in weights_doc:
            weights_fields[name] = _float(weights_doc.pop(name), f"{path}.weights.{name}")
    _done(weights_doc, f"{path}.weights")
    try:
        weights = WeightConfig(**weights_fields)
    except ValueError as exc:
        _fail(f"{path}.weights", str(exc))
    fields = dict(
        horizon=_int(_take(doc, path, "horizon", DEFAULT_HORIZON), f"{path}.horizon", lo=1),
        seed=_int(_take(doc, path, "seed", 0), f"{path}.seed", lo=0),
        quiet_period=_int(_take(doc, path, "quiet_period", DEFAULT_QUIET_PERIOD),
                          f"{path}.quiet_period", lo=0),
        auto_accept_optimizations=_bool(
            _take(doc, path, "auto_accept_optimizations", False),
            f"{path}.auto_accept_optimizations"),
        escalation_interval=_int(
            _take(doc, path, "escalation_interval", DEFAULT_ESCALATION_INTERVAL),
            f"{path}.escalation_interval", lo=1),
        overdraft_limit=_int(_take(doc, path, "overdraft_limit", DEFAULT_OVERDRAFT_LIMIT),
                             f"{path}.overdraft_limit", lo=0),
        long_split_x=_int(_take(doc, path, "long_split_x", DEFAULT_LONG_SPLIT_X),
                          f"{path}.long_split_x", lo=1),
        long_split_y=_int(_take(doc, path, "long_split_y", DEFAULT_LONG_SPLIT_Y),
                          f"{path}.long_split_y", lo=1),
        weights=weights,
    )
    _done(doc, path)
    return ScenarioConfig(**fields)


def _parse_stock(doc, path: str, org: OrgStructure) -> dict:
    doc = _mapping(doc, path)
    out: dict = {}
    for area_id, kinds in doc.items():
        if area_id not in org.areas:
            _fail(f"{path}.{area_id}", "unknown area")
        kinds = _mapping(kinds, f"{path}.{area_id}")
        out[area_id] = {}
        for kind, items in kinds.items():
            if kind not in RESOURCE_KINDS:
                _fail(f"{path}.{area_id}.{kind}", "unknown resource kind")
            items = _mapping(items, f"{path}.{area_id}.{kind}")
            out[area_id][kind] = {
                item: _int(n, f"{path}.{area_id}.{kind}.{item}", lo=0)
                for item, n in items.items()
            }
    return out


def _cross_check(scenario: Scenario) -> None:
    """Reference integrity beyond per-field shape."""
    machine_ids = {m.id for m in scenario.machines}
    org_machines = scenario.org.machines_under(scenario.org.root.id)
    for i, m in enumerate(scenario.machines):
        if m.area not in scenario.org.areas:
            _fail(f"machines[{i}].area", f"unknown area {m.area!r}")
        if m.id not in org_machines:
            _fail(f"machines[{i}].id", f"machine {m.id!r} not placed in any area")
        if m.id not in scenario.org.leaf_of(m.id).machine_ids or \
                scenario.org.leaf_of(m.id).id != m.area:
            _fail(f"machines[{i}].area",
                  f"machine {m.id!r} is listed under area "
                  f"{scenario.org.leaf_of(m.id).id!r}")
    for mid in sorted(org_machines - machine_ids):
        _fail("areas", f"area references unknown machine {mid!r}")

    seen_orders: set[str] = set()
    all_specs = list(scenario.order_specs) + [
        d.rush for d in scenario.disturbances if d.rush is not None]
    seen_ops: set[str] = set()
    for spec in all_specs:
        if spec.order.id in seen_orders:
            _fail("orders", f"duplicate order id {spec.order.id!r}")
        seen_orders.add(spec.order.id)
        for op in spec.order.operations:
            if op.id in seen_ops:
                _fail("orders", f"duplicate operation id {op.id!r}")
            seen_ops.add(op.id)
        for area_id in spec.excluded_areas:
            if area_id not in scenario.org.areas:
                _fail("orders", f"order {spec.order.id!r} excludes unknown "
                                f"area {area_id!r}")
        if spec.order.arrival > scenario.config.horizon:
            _fail("orders", f"order {spec.order.id!r} arrives past the horizon")
    for i, d in enumerate(scenario.disturbances):
        if d.machine is not None and d.machine not in machine_ids:
            _fail(f"disturbances[{i}].machine", f"unknown machine {d.machine!r}")
        if d.area is not None and d.area not in scenario.org.areas:
            _fail(f"disturbances[{i}].area", f"unknown area {d.area!r}")
        if d.kind == "back-order" and d.order not in seen_orders:
            _fail(f"disturbances[{i}].order", f"unknown order {d.order!r}")
        if d.kind == "tool-damage":
            stocked = scenario.stock.get(d.area, {}).get(d.resource, {})
            if d.item not in stocked:
                _fail(f"disturbances[{i}].item",
                      f"no {d.item!r} ever stocked in area {d.area!r}")


def parse_document(doc) -> Scenario:
    doc = _mapping(doc, "$")
    version = _int(_take(doc, "$", "version"), "version")
    if version != FORMAT_VERSION:
        _fail("version", f"unsupported format version {version}, "
                         f"this build reads version {FORMAT_VERSION}")
    name = _str(_take(doc, "$", "name", "unnamed"), "name")
    areas = [_parse_area(a, f"areas[{i}]")
             for i, a in enumerate(_array(_take(doc, "$", "areas"), "areas"))]
    try:
        org = OrgStructure(areas)
    except ValueError as exc:
        _fail("areas", str(exc))
    machines = tuple(
        _parse_machine(m, f"machines[{i}]")
        for i, m in enumerate(_array(_take(doc, "$", "machines"), "machines")))
    if not machines:
        _fail("machines", "scenario needs at least one machine")
    order_specs = tuple(
        _parse_order(o, f"orders[{i}]")
        for i, o in enumerate(_array(_take(doc, "$", "orders", []), "orders")))
    config = _parse_config(_take(doc, "$", "config", {}), "config")
    stock = _parse_stock(_take(doc, "$", "stock", {}), "stock", org)
    disturbances = tuple(
        _parse_disturbance(d, f"disturbances[{i}]")
        for i, d in enumerate(_array(_take(doc, "$", "disturbances", []),
                                     "disturbances")))
    _done(doc, "$")
    scenario = Scenario(
        version=version, name=name, machines=machines, org=org,
        order_specs=order_specs, stock=stock, disturbances=disturbances,
        config=config,
    )
    _cross_check(scenario)
    return scenario


def loads(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"not valid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}"
        ) from exc
    return parse_document(doc)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as handle:
        return loads(handle.read())


# -- serialization ---------------------------------------------------------------

def _capability_doc(cap: CapabilityVector) -> dict:
    return {
        "binary": sorted(cap.binary),
        "graded": {name: value for name, value in sorted(cap.graded)},
        "processes": sorted(cap.processes),
    }


def _machine_doc(m: Machine) -> dict:
    return {
        "apt": m.apt,
        "area": m.area,
        "calendar": [[s, e] for s, e in m.calendar.week],
        "capability": _capability_doc(m.capability),
        "id": m.id,
        "setup_family": m.setup_family,
    }


def _area_doc(a: Area) -> dict:
    return {
        "id": a.id,
        "level": a.level,
        "machines": sorted(a.machine_ids),
        "parent": a.parent,
        "transit_minutes": a.transit_minutes,
        "transport_capacity": a.transport_capacity,
    }


def _operation_doc(op: Operation) -> dict:
    return {
        "alternatives": list(op.alternatives),
        "duration": op.duration,
        "id": op.id,
        "lots": op.lots,
        "process": op.process,
        "requirement": _capability_doc(op.requirement),
        "resources": [[kind, item] for kind, item in op.resources],
        "robustness": op.robustness,
        "seq": op.seq,
        "setup_family": op.setup_family,
    }


def _order_doc(spec: OrderSpec, *, rush: bool = False) -> dict:
    o = spec.order
    doc = {
        "arrival": o.arrival,
        "due": o.due,
        "id": o.id,
        "operations": [_operation_doc(op) for op in o.operations],
        "priority": o.priority,
        "release": o.release,
    }
    if not rush:
        doc.update({
            "deadline": spec.deadline,
            "excluded_areas": sorted(spec.excluded_areas),
            "strategy": spec.strategy,
            "x_threshold": spec.x_threshold,
        })
    return doc


def _disturbance_doc(d: Disturbance) -> dict:
    doc: dict = {"at": d.at, "kind": d.kind}
    if d.kind == "machine-down":
        doc["machine"] = d.machine
        doc["until"] = d.until
    elif d.kind == "tool-damage":
        doc.update({"area": d.area, "item": d.item, "resource": d.resource})
    elif d.kind == "rush-order":
        doc["order"] = _order_doc(d.rush, rush=True)
    else:
        doc.update({"extend_due": d.extend_due, "order": d.order})
    return doc


def to_document(scenario: Scenario) -> dict:
    cfg = scenario.config
    return {
        "areas": [_area_doc(a) for a in sorted(scenario.org.areas.values(),
                                               key=lambda a: (a.level, a.id))],
        "config": {
            "auto_accept_optimizations": cfg.auto_accept_optimizations,
            "escalation_interval": cfg.escalation_interval,
            "horizon": cfg.horizon,
            "long_split_x": cfg.long_split_x,
            "long_split_y": cfg.long_split_y,
            "overdraft_limit": cfg.overdraft_limit,
            "quiet_period": cfg.quiet_period,
            "seed": cfg.seed,
            "weights": {
                "machine": cfg.weights.machine,
                "position": cfg.weights.position,
                "robustness": cfg.weights.robustness,
                "setup": cfg.weights.setup,
                "timeslot": cfg.weights.timeslot,
            },
        },
        "disturbances": [
            _disturbance_doc(d)
            for d in sorted(scenario.disturbances,
                            key=lambda d: (d.at, d.kind, d.machine or "",
                                           d.area or "", d.item or "",
                                           d.order or ""))
        ],
        "machines": [_machine_doc(m)
                     for m in sorted(scenario.machines, key=lambda m: m.id)],
        "name": scenario.name,
        "orders": [_order_doc(s) for s in sorted(scenario.order_specs,
                                                 key=lambda s: (s.order.arrival,
                                                                s.order.id))],
        "stock": {
            area: {kind: dict(sorted(items.items()))
                   for kind, items in sorted(kinds.items())}
            for area, kinds in sorted(scenario.stock.items())
        },
        "version": scenario.version,
    }


def dumps(scenario: Scenario) -> str:
    return json.dumps(to_document(scenario), indent=2, sort_keys=True) + "\n"


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps(scenario))
