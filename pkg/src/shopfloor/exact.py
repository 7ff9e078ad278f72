"""Exhaustive schedule search for tiny instances.

The oracle the optimizer is measured against: every machine assignment and
sequence is tried with earliest-start timing, so the returned value is the
true minimum. Assumes always-open machines and no resource or transport
limits beyond one operation per machine at a time. The figure is the last
completion time measured from zero; with all releases at zero that equals
the minimal schedule span. Useful up to a handful of operations, nothing
more.
"""

from __future__ import annotations

from typing import Callable, Iterable

from .dispatch import filter_machines
from .model import Duration, Machine, Order


class SearchBudgetExceeded(RuntimeError):
    """The instance is too large for exhaustive search."""


def optimal_makespan(
    orders: Iterable[Order], machines: dict[str, Machine],
    *, transit: Callable[[str, str], Duration] | None = None,
    node_limit: int = 500_000,
) -> Duration | None:
    """Minimum possible completion time of the last operation, or None when
    some operation fits no machine at all."""
    move = transit or (lambda a, b: 0)
    orders = list(orders)
    stage_lists = [o.stages() for o in orders]
    op_by_id = {op.id: op for o in orders for op in o.operations}
    eligible: dict[str, list[str]] = {}
    for o in orders:
        for op in o.operations:
            fits = [m.id for m in filter_machines(op, machines)]
            if not fits:
                return None
            eligible[op.id] = fits

    # per order, remaining work from each stage on: stages run one after
    # another, operations inside a stage may run side by side
    suffix: list[list[int]] = []
    for stages in stage_lists:
        tail = [0] * (len(stages) + 1)
        for i in range(len(stages) - 1, -1, -1):
            tail[i] = max(op.duration for op in stages[i]) + tail[i + 1]
        suffix.append(tail)

    def initial(oi: int):
        stages = stage_lists[oi]
        pending = tuple(op.id for op in stages[0]) if stages else ()
        return (0, pending, (), ())

    total = sum(len(o.operations) for o in orders)
    best: Duration | None = None
    nodes = 0

    def dfs(states, free, placed, cur_max):
        nonlocal best, nodes
        nodes += 1
        if nodes > node_limit:
            raise SearchBudgetExceeded(f"more than {node_limit} nodes")
        if placed == total:
            if best is None or cur_max < best:
                best = cur_max
            return
        if best is not None:
            bound = cur_max
            for oi, o in enumerate(orders):
                idx, pending, _, prev = states[oi]
                if idx >= len(stage_lists[oi]):
                    continue
                ready = max([o.release, *(end for _, end in prev)])
                rem = max((op_by_id[p].duration for p in pending), default=0)
                bound = max(bound, ready + rem + suffix[oi][idx + 1])
            if bound >= best:
                return
        for oi, o in enumerate(orders):
            idx, pending, done, prev = states[oi]
            for op_id in pending:
                op = op_by_id[op_id]
                for mid in eligible[op_id]:
                    ready = o.release
                    for pm, pend in prev:
                        ready = max(ready, pend + move(pm, mid))
                    start = max(free[mid], ready)
                    end = start + op.duration
                    rest = tuple(p for p in pending if p != op_id)
                    finished = done + ((mid, end),)
                    if rest:
                        state = (idx, rest, finished, prev)
                    elif idx + 1 < len(stage_lists[oi]):
                        nxt = tuple(s.id for s in stage_lists[oi][idx + 1])
                        state = (idx + 1, nxt, (), finished)
                    else:
                        state = (idx + 1, (), (), finished)
                    dfs(
                        states[:oi] + (state,) + states[oi + 1:],
                        {**free, mid: end},
                        placed + 1,
                        max(cur_max, end),
                    )

    dfs(tuple(initial(i) for i in range(len(orders))),
        {mid: 0 for mid in machines}, 0, 0)
    return best
