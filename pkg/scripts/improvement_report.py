"""Improvement-band experiment: how much does the optimizer claw back from
naive Force-forward plans?

Runs seeded benchmark instances, prints the distribution and optionally
writes the raw numbers as JSON for plotting.

    python3 scripts/improvement_report.py --instances 100 --out report.json
"""

import argparse
import json
import statistics
import sys
import time

from shopfloor import synth
from shopfloor.optimizer import OptimizerConfig, optimize


def naive_plan(sc):
    shop = sc.build_shop()
    for spec in sorted(sc.order_specs, key=lambda s: s.order.id):
        order = spec.fresh()
        order.arrival = 0
        shop.mma_create_job(order, excluded_areas=spec.excluded_areas)
        shop.dispatch(order.id, spec.request(sc.config))
    return shop


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--instances", type=int, default=100)
    parser.add_argument("--machines", type=int, default=5)
    parser.add_argument("--operations", type=int, default=20)
    parser.add_argument("--seed-base", type=int, default=0,
                        help="first seed; instance i uses seed-base + i")
    parser.add_argument("--out", default=None, help="write raw rows as JSON")
    args = parser.parse_args(argv)

    rows = []
    started = time.time()
    for i in range(args.instances):
        seed = args.seed_base + i
        sc = synth.benchmark(seed, machines=args.machines,
                             operations=args.operations)
        shop = naive_plan(sc)
        run = optimize(shop.ctx, OptimizerConfig(seed=seed))
        rows.append({
            "seed": seed,
            "base": run.base_makespan,
            "candidate": run.candidate_makespan,
            "improvement": round(run.improvement, 4),
            "winning": run.winning.label if run.winning else None,
        })
        if run.candidate_makespan > run.base_makespan:
            print(f"seed {seed}: candidate WORSE than base, aborting",
                  file=sys.stderr)
            return 1

    gains = [r["improvement"] for r in rows]
    in_band = sum(1 for g in gains if 0.10 <= g <= 0.35)
    print(f"{args.instances} instances "
          f"({args.machines} machines x {args.operations} operations), "
          f"{time.time() - started:.1f}s")
    print(f"  mean    {statistics.mean(gains):7.2%}")
    print(f"  median  {statistics.median(gains):7.2%}")
    print(f"  min     {min(gains):7.2%}")
    print(f"  max     {max(gains):7.2%}")
    print(f"  in 10-35% band  {in_band}/{args.instances}")
    buckets = {}
    for g in gains:
        buckets[int(g * 100) // 5 * 5] = buckets.get(int(g * 100) // 5 * 5, 0) + 1
    for lo in sorted(buckets):
        bar = "#" * buckets[lo]
        print(f"  {lo:3d}-{lo + 5:d}%  {bar}")

    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"rows": rows, "mean": statistics.mean(gains),
                       "median": statistics.median(gains),
                       "in_band": in_band}, fh, indent=2, sort_keys=True)
        print(f"raw rows written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
