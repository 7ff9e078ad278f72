"""Command line front end.

Exit codes: 0 success; 2 input rejected (scenario or arguments fail
validation); 3 run or verification failed (engine error, replay divergence,
budget exhausted).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import scenario as scenario_mod
from . import simulator
from .optimizer import OptimizerConfig, optimize
from .scenario import Scenario, ScenarioError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3

_STRATEGIES = ("OPT", "Force", "X-Competition", "Wait-X", "Manual")


def _load(args) -> Scenario:
    sc = scenario_mod.load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        sc = replace(sc, config=replace(sc.config, seed=args.seed))
    if getattr(args, "horizon", None) is not None:
        sc = replace(sc, config=replace(sc.config, horizon=args.horizon))
    defaults = getattr(args, "strategy_defaults", None)
    if defaults:
        sc = _apply_strategy_defaults(sc, defaults)
    return sc


def _apply_strategy_defaults(sc: Scenario, text: str) -> Scenario:
    """Override every order's dispatch strategy, e.g. for side-by-side
    experiment runs. Accepts a bare strategy name or a JSON object like
    {"strategy": "X-Competition", "x_threshold": 3}."""
    if text.strip().startswith("{"):
        try:
            fields = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"--strategy-defaults: not valid JSON: {exc}")
    else:
        fields = {"strategy": text.strip()}
    strategy = fields.get("strategy")
    if strategy not in _STRATEGIES:
        raise ScenarioError(
            f"--strategy-defaults: unknown strategy {strategy!r}, "
            f"expected one of {list(_STRATEGIES)}")
    threshold = fields.get("x_threshold")
    specs = []
    for spec in sc.order_specs:
        x = threshold
        if strategy == "X-Competition" and x is None:
            x = spec.order.priority
        specs.append(replace(
            spec, strategy=strategy,
            x_threshold=x if strategy == "X-Competition" else None,
        ))
    return replace(sc, order_specs=tuple(specs))


def _print_metrics(metrics: dict, out=None) -> None:
    out = out or sys.stdout
    print(f"  makespan       {metrics['makespan']}", file=out)
    print(f"  due hit rate   {metrics['due_hit_rate']:.2%}", file=out)
    print(f"  improvement    {metrics['improvement']:.2%}", file=out)
    print(f"  events         {metrics['events']}", file=out)
    print(f"  escalations    {metrics['escalations']}", file=out)
    print(f"  overdrafts     {metrics['overdrafts']}", file=out)
    orders = ", ".join(f"{state} {n}" for state, n in metrics["orders"].items())
    print(f"  orders         {orders or 'none'}", file=out)
    print("  utilization", file=out)
    for mid, value in metrics["utilization"].items():
        print(f"    {mid:<12} {value:.2%}", file=out)


def cmd_run(args) -> int:
    sc = _load(args)
    engine = simulator.run(sc, seed=args.seed)
    metrics = engine.metrics()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        engine.write_trace(out / "trace.ndjson")
        (out / "metrics.json").write_text(
            json.dumps(metrics, indent=2, sort_keys=True) + "\n")
        print(f"trace and metrics written to {out}")
    print(f"run complete: {metrics['events']} events, "
          f"state hash {engine.state_hash()[:12]}")
    _print_metrics(metrics)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        sc = scenario_mod.load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        print("1 error", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {sc.name!r} with {len(sc.machines)} machines, "
          f"{len(sc.order_specs)} orders, {len(sc.disturbances)} disturbances")
    return EXIT_OK


def cmd_optimize(args) -> int:
    """Offline improvement: place every order on a quiet shop, then search."""
    sc = _load(args)
    shop = sc.build_shop()
    for spec in sorted(sc.order_specs, key=lambda s: (s.order.arrival, s.order.id)):
        order = spec.fresh()
        order.arrival = 0
        shop.mma_create_job(order, excluded_areas=spec.excluded_areas)
        shop.dispatch(order.id, spec.request(sc.config))
    run = optimize(shop.ctx, OptimizerConfig(seed=sc.config.seed))
    print(f"base makespan       {run.base_makespan}")
    print(f"candidate makespan  {run.candidate_makespan}")
    print(f"improvement         {run.improvement:.2%}")
    print(f"winning pass        {run.winning.label if run.winning else 'none'}")
    print(f"passes tried        {len(run.passes)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = {
            "base_makespan": run.base_makespan,
            "candidate_makespan": run.candidate_makespan,
            "improvement": round(run.improvement, 4),
            "winning": run.winning.label if run.winning else None,
            "passes": list(run.passes),
            "candidate": [{
                "op": s.op_id, "machine": s.machine_id,
                "start": s.start, "end": s.end, "part": s.part,
            } for s in sorted(run.candidate.slots(),
                              key=lambda s: (s.machine_id, s.start))],
        }
        (out / "optimization.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(f"report written to {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    sc = _load(args)
    lines = Path(args.trace).read_text().splitlines()
    report = simulator.replay(sc, lines, seed=args.seed)
    if report.ok:
        print(f"replay ok: {len(report.produced)} events, "
              f"state hash {report.state_hash}")
        return EXIT_OK
    print(f"replay diverged at line {report.divergence}", file=sys.stderr)
    if report.expected is not None:
        print(f"  expected: {report.expected}", file=sys.stderr)
    if report.divergence is not None and report.divergence < len(report.produced):
        print(f"  produced: {report.produced[report.divergence]}",
              file=sys.stderr)
    return EXIT_RUNTIME


def cmd_serve(args) -> int:
    from .service import serve

    sc = _load(args)
    engine = simulator.Engine(sc, seed=args.seed)
    print(f"serving {sc.name!r} on {args.bind}")
    serve(engine, args.bind)
    return EXIT_OK


def cmd_report(args) -> int:
    sc = _load(args)
    engine = simulator.run(sc, seed=args.seed)
    print(f"scenario {sc.name!r}  seed {engine.seed}")
    _print_metrics(engine.metrics())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shopfloor",
        description="Shop-floor scheduling: run, inspect and serve scenarios.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, *, seed=True, horizon=True, defaults=True, out=False):
        p.add_argument("--scenario", required=True, help="scenario file")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override the scenario's seed")
        if horizon:
            p.add_argument("--horizon", type=int, default=None,
                           help="override the scenario's horizon (minutes)")
        if defaults:
            p.add_argument("--strategy-defaults", default=None,
                           help="force one dispatch strategy on every order "
                                "(name or JSON with x_threshold)")
        if out:
            p.add_argument("--out", default=None,
                           help="directory for result files")

    p = sub.add_parser("run", help="execute a scenario script")
    common(p, out=True)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("optimize", help="offline plan improvement report")
    common(p, out=True)
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("replay", help="verify a recorded trace")
    common(p, defaults=False)
    p.add_argument("trace", help="NDJSON trace file")
    p.set_defaults(handler=cmd_replay)

    p = sub.add_parser("serve", help="start the HTTP gateway")
    common(p)
    p.add_argument("--bind", default="127.0.0.1:8080",
                   help="host:port to listen on")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("report", help="run and print the metrics table")
    common(p)
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"missing file: {exc.filename}", file=sys.stderr)
        return EXIT_INVALID
    except simulator.EngineError as exc:
        print(f"engine error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
