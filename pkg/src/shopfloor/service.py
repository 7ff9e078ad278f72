"""HTTP gateway around one engine.

Reads serve snapshots and never mutate; every write is funneled through the
engine mailbox (a single lock, so effects apply in request order) and the
response carries the sequence numbers of the trace events it produced.
Rejected commands come back as a structured body
``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .dispatch import manual_split_placement
from .model import OrderState
from .simulator import Engine, EngineError

# engine rejection code -> HTTP status
_STATUS = {
    "unknown-order": 404,
    "unknown-approval": 404,
    "unknown-run": 404,
    "duplicate-order": 409,
    "approval-not-pending": 409,
    "restore-window-closed": 409,
    "time-passed": 409,
    "bad-time": 409,
    "snapshot-diverged": 409,
}


def _slot_doc(slot, owner: str | None, priority: int | None) -> dict:
    return {
        "op": slot.op_id,
        "order": owner,
        "priority": priority,
        "machine": slot.machine_id,
        "start": slot.start,
        "end": slot.end,
        "part": slot.part,
        "frozen": slot.frozen,
        "overdraft": slot.overdraft,
    }


def _order_doc(engine: Engine, order) -> dict:
    spec = engine.scenario.spec_for(order.id) or engine._specs.get(order.id)
    return {
        "id": order.id,
        "state": order.state.value,
        "priority": order.priority,
        "release": order.release,
        "arrival": order.arrival,
        "due": order.due,
        "strategy": spec.strategy if spec else None,
        "failure_reason": order.failure_reason,
        "completed": engine.completion_of(order.id),
        "operations": [op.id for op in order.operations],
    }


def _run_doc(run_id: str, run) -> dict:
    return {
        "run": run_id,
        "status": run.status,
        "before": run.base_makespan,
        "after": run.candidate_makespan,
        "improvement": round(run.improvement, 4),
        "winning": run.winning.label if run.winning else None,
        "passes": list(run.passes),
    }


def build_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="shopfloor", docs_url=None, redoc_url=None)
    mailbox = threading.Lock()

    def command(doc: dict) -> JSONResponse:
        """Run one engine command under the mailbox; report its event ids."""
        with mailbox:
            records = engine.ingest_command(doc)
            return JSONResponse({
                "events": [r.seq for r in records],
                "clock": engine.clock,
            })

    @app.exception_handler(EngineError)
    async def engine_error(_request: Request, exc: EngineError):
        return JSONResponse(
            status_code=_STATUS.get(exc.code, 400),
            content={"error": {"code": exc.code, "message": str(exc)}},
        )

    # -- reads ---------------------------------------------------------------

    @app.get("/plan")
    def plan() -> dict:
        with mailbox:
            lanes: dict[str, list[dict]] = {
                mid: [] for mid in sorted(engine.shop.machines)}
            for slot in engine.shop.plan.slots():
                op = engine.shop._operation(slot.op_id)
                owner = op.order_id if op else None
                order = engine.shop.orders.get(owner) if owner else None
                lanes[slot.machine_id].append(_slot_doc(
                    slot, owner, order.priority if order else None))
            for lane in lanes.values():
                lane.sort(key=lambda d: (d["start"], d["op"]))
            return {
                "clock": engine.clock,
                "machines": {
                    mid: {"status": engine.shop.machines[mid].status.value,
                          "slots": lanes[mid]}
                    for mid in lanes
                },
                "makespan": engine.metrics()["makespan"],
            }

    @app.get("/orders")
    def orders() -> dict:
        with mailbox:
            return {"orders": [
                _order_doc(engine, o)
                for _, o in sorted(engine.shop.orders.items())
            ]}

    @app.get("/orders/{order_id}")
    def order_detail(order_id: str):
        with mailbox:
            order = engine.shop.orders.get(order_id)
            if order is None:
                raise EngineError("unknown-order", f"no order {order_id!r}")
            doc = _order_doc(engine, order)
            doc["operations"] = [{
                "id": op.id,
                "process": op.process,
                "duration": op.duration,
                "seq": op.seq,
                "resources": [list(r) for r in op.resources],
                "slots": [_slot_doc(s, order.id, order.priority)
                          for s in engine.shop.plan.op_slots(op.id)],
            } for op in order.operations]
            return doc

    @app.get("/approvals")
    def approvals() -> dict:
        with mailbox:
            return {"approvals": [a.summary()
                                  for a in engine.approvals.values()]}

    @app.get("/optimizations")
    def optimizations() -> dict:
        with mailbox:
            return {"optimizations": [
                _run_doc(run_id, run)
                for run_id, run in engine.optimizations.items()
            ]}

    @app.get("/metrics")
    def metrics() -> dict:
        with mailbox:
            return engine.metrics()

    @app.get("/events")
    def events(after: int = 0) -> dict:
        with mailbox:
            records = engine.events_after(after)
            return {
                "events": [{"seq": r.seq, "time": r.time, "kind": r.kind,
                            "payload": r.payload} for r in records],
                "last": records[-1].seq if records else after,
                "clock": engine.clock,
            }

    # -- writes --------------------------------------------------------------

    @app.post("/orders")
    def submit_order(body: dict):
        return command({"command": "submit-order", "order": body})

    @app.post("/approvals/{approval_id}")
    def resolve_approval(approval_id: str, body: dict):
        return command({"command": "resolve-approval", "approval": approval_id,
                        "decision": body.get("decision", "")})

    @app.post("/orders/{order_id}/manual")
    def manual(order_id: str, body: dict):
        return command({"command": "manual", "order": order_id, **body})

    @app.post("/optimize")
    def optimize():
        return command({"command": "optimize-now"})

    @app.post("/optimizations/{run_id}")
    def decide_optimization(run_id: str, body: dict):
        decision = body.get("decision", "")
        if decision == "restore":
            return command({"command": "restore-optimization", "run": run_id})
        if decision not in ("accept", "deny"):
            raise EngineError("bad-decision",
                              "decision must be accept, deny or restore")
        with mailbox:
            approval = next(
                (a for a in engine.approvals.values()
                 if a.subject == run_id and a.state == "pending"), None)
        if approval is None:
            raise EngineError("approval-not-pending",
                              f"no pending approval for {run_id!r}")
        return command({
            "command": "resolve-approval", "approval": approval.id,
            "decision": "approve" if decision == "accept" else "reject",
        })

    @app.post("/disturbances")
    def inject(body: dict):
        return command({"command": "inject", "disturbance": body})

    @app.post("/clock/advance")
    def advance(body: dict):
        return command({"command": "advance", "until": body.get("until")})

    # -- what-if -------------------------------------------------------------

    @app.post("/validate/placement")
    def validate_placement(body: dict):
        """Try a manual placement against the live plan and roll it back;
        the verdict tells the console whether committing would succeed."""
        with mailbox:
            order = engine.shop.orders.get(body.get("order", ""))
            if order is None:
                raise EngineError("unknown-order",
                                  f"no order {body.get('order')!r}")
            ctx = engine.shop.ctx
            state, reason = order.state, order.failure_reason
            token = ctx.snapshot()
            try:
                outcome = manual_split_placement(
                    order, body.get("operation", ""),
                    [tuple(p) for p in body.get("pieces", [])], ctx)
            except ValueError as exc:
                outcome = None
                verdict = {"ok": False, "reason": str(exc)}
            finally:
                ctx.rollback(token)
                order.state, order.failure_reason = state, reason
            if outcome is not None:
                verdict = {"ok": bool(outcome.placed),
                           "reason": outcome.reason}
            return verdict

    return app


def serve(engine: Engine, bind: str = "127.0.0.1:8080") -> None:
    """Run the gateway until interrupted. The script is advanced to the
    initial clock only; the console drives time through /clock/advance."""
    import uvicorn

    engine.advance(0)
    host, _, port = bind.partition(":")
    uvicorn.run(build_app(engine), host=host or "127.0.0.1",
                port=int(port or 8080), log_level="warning")
