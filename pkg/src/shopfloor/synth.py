"""Seeded random scenario generation.

One seed in, one self-contained scenario out. The generator leans on the
scenario parser for final validation, so anything it produces is exactly as
trustworthy as a hand-written file. Sizes stay small enough that a thousand
generated runs finish in test time.
"""

from __future__ import annotations

from random import Random

from .scenario import DEFAULT_HORIZON, Scenario, parse_document

PROCESS_POOL = ("milling", "turning", "drilling", "grinding")
TOOL_POOL = ("vise", "chuck", "mandrel")


def _calendar(rng: Random) -> list[list[int]]:
    if rng.random() < 0.6:
        return [[0, 7 * 24 * 60]]
    start = rng.choice((360, 420, 480))
    end = start + rng.choice((480, 600, 720))
    return [[d * 1440 + start, d * 1440 + end] for d in range(7)]


def _machines(rng: Random, count: int, two_areas: bool) -> tuple[list, list]:
    machines = []
    for i in range(count):
        processes = sorted(rng.sample(PROCESS_POOL, rng.randint(1, 3)))
        if two_areas:
            area = "east" if i < (count + 1) // 2 else "west"
        else:
            area = "shop"
        machines.append({
            "id": f"m{i + 1}",
            "area": area,
            "capability": {"processes": processes},
            "calendar": _calendar(rng),
        })
    # coverage floor: the first machine handles everything, so no generated
    # operation is unplaceable by construction
    machines[0]["capability"]["processes"] = sorted(PROCESS_POOL)
    if two_areas:
        areas = [
            {"id": "net", "level": 1},
            {"id": "east", "level": 2, "parent": "net",
             "machines": [m["id"] for m in machines if m["area"] == "east"],
             "transit_minutes": rng.choice((30, 60, 120)),
             "transport_capacity": rng.randint(1, 2)},
            {"id": "west", "level": 2, "parent": "net",
             "machines": [m["id"] for m in machines if m["area"] == "west"],
             "transit_minutes": rng.choice((30, 60, 120)),
             "transport_capacity": rng.randint(1, 2)},
        ]
    else:
        areas = [{"id": "shop", "level": 1,
                  "machines": [m["id"] for m in machines]}]
    return machines, areas


def _order(rng: Random, oid: str, arrival: int, horizon: int,
           offered: list[str], with_tools: bool) -> dict:
    ops = []
    total = 0
    for seq in range(rng.randint(1, 3)):
        duration = rng.randint(20, 240)
        total += duration
        op = {
            "id": f"{oid}-{seq}",
            "seq": seq,
            "process": rng.choice(offered),
            "duration": duration,
            "requirement": {},
        }
        if with_tools and rng.random() < 0.2:
            op["resources"] = [["tool", rng.choice(TOOL_POOL)]]
        ops.append(op)
    slack = int(total * rng.uniform(1.5, 4.0)) + 60
    doc = {
        "id": oid,
        "priority": rng.randint(1, 5),
        "release": arrival,
        "arrival": arrival,
        "due": min(arrival + slack, horizon * 4),
        "operations": ops,
    }
    roll = rng.random()
    if roll < 0.5:
        doc["strategy"] = "Force"
    elif roll < 0.8:
        doc["strategy"] = "OPT"
    elif roll < 0.9:
        doc["strategy"] = "X-Competition"
        doc["x_threshold"] = doc["priority"]
    else:
        doc["strategy"] = "Wait-X"
        doc["deadline"] = doc["due"]
    return doc


def _disturbances(rng: Random, machines: list, orders: list,
                  offered: list[str], horizon: int) -> list:
    out = []
    for _ in range(rng.randint(0, 3)):
        kind = rng.choice(("machine-down", "tool-damage", "rush-order",
                           "back-order"))
        at = rng.randint(10, max(11, horizon // 4))
        if kind == "machine-down":
            machine = rng.choice(machines[1:] or machines)
            out.append({"kind": kind, "at": at, "machine": machine["id"],
                        "until": at + rng.randint(60, 720)})
        elif kind == "tool-damage":
            area = machines[0]["area"]
            out.append({"kind": kind, "at": at, "area": area,
                        "resource": "tool", "item": rng.choice(TOOL_POOL)})
        elif kind == "rush-order":
            rush = _order(rng, f"rush{len(out)}", 0, horizon, offered, False)
            for key in ("strategy", "x_threshold", "deadline"):
                rush.pop(key, None)
            rush["priority"] = 5
            rush.pop("arrival")
            rush.pop("release")
            out.append({"kind": kind, "at": at, "order": rush})
        else:
            order = rng.choice(orders)
            out.append({"kind": kind, "at": order["arrival"] + rng.randint(1, 600),
                        "order": order["id"], "extend_due": rng.randint(120, 1440)})
    return out


def generate(seed: int, *, machines: int | None = None,
             orders: int | None = None, horizon: int = DEFAULT_HORIZON,
             disturbed: bool = True,
             auto_accept_optimizations: bool = False) -> Scenario:
    """Build one reproducible scenario; equal seeds give equal documents."""
    rng = Random(seed)
    machine_count = machines if machines is not None else rng.randint(2, 5)
    two_areas = machine_count >= 4 and rng.random() < 0.4
    machine_docs, area_docs = _machines(rng, machine_count, two_areas)
    offered = sorted({p for m in machine_docs
                      for p in m["capability"]["processes"]})
    order_count = orders if orders is not None else rng.randint(4, 12)
    order_docs = []
    for i in range(order_count):
        arrival = rng.randint(0, max(1, horizon // 6))
        order_docs.append(_order(rng, f"job{i + 1}", arrival, horizon,
                                 offered, True))
    stock_area = machine_docs[0]["area"]
    doc = {
        "version": 1,
        "name": f"generated-{seed}",
        "areas": area_docs,
        "machines": machine_docs,
        "orders": order_docs,
        "stock": {stock_area: {"tool": {item: rng.randint(1, 3)
                                        for item in TOOL_POOL}}},
        "disturbances": _disturbances(rng, machine_docs, order_docs, offered,
                                      horizon) if disturbed else [],
        "config": {
            "seed": seed,
            "horizon": horizon,
            "auto_accept_optimizations": auto_accept_optimizations,
        },
    }
    return parse_document(doc)


def benchmark(seed: int, *, machines: int = 5, operations: int = 20) -> Scenario:
    """Improvement benchmark instance: fixed machine and operation counts,
    uneven capabilities and two shift patterns, so a greedy first placement
    leaves slack for the optimizer to claw back."""
    rng = Random(seed)
    machine_docs = []
    for i in range(machines):
        offered = sorted(PROCESS_POOL) if i == 0 else sorted(
            rng.sample(PROCESS_POOL, 2))
        cal = [[0, 7 * 1440]] if i % 2 == 0 else \
            [[d * 1440 + 360, d * 1440 + 1080] for d in range(7)]
        machine_docs.append({"id": f"m{i + 1}", "area": "shop",
                             "calendar": cal,
                             "capability": {"processes": offered}})
    order_docs, total, j = [], 0, 0
    while total < operations:
        j += 1
        n_ops = min(rng.randint(1, 3), operations - total)
        ops = [{"id": f"w{j}-{s}", "seq": s,
                "process": rng.choice(PROCESS_POOL),
                "duration": rng.randint(30, 480)} for s in range(n_ops)]
        total += n_ops
        order_docs.append({"id": f"w{j}", "priority": rng.randint(1, 5),
                           "due": 30000, "operations": ops})
    return parse_document({
        "version": 1,
        "name": f"benchmark-{seed}",
        "areas": [{"id": "shop", "level": 1,
                   "machines": [m["id"] for m in machine_docs]}],
        "machines": machine_docs,
        "orders": order_docs,
        "stock": {},
        "disturbances": [],
        "config": {"quiet_period": 0, "horizon": 40320, "seed": seed},
    })
