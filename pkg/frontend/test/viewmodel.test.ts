import { describe, expect, it } from "vitest";

import type { ApprovalDoc, OrderDoc, PlanDoc } from "../src/api";
import {
  PRIORITY_COLORS,
  approvalCards,
  buildLanes,
  canonical,
  planFingerprint,
  priorityColor,
  runCards,
  slotCounts,
  waitingPool,
} from "../src/viewmodel";

function slot(op: string, machine: string, start: number, end: number, extra: object = {}) {
  return {
    op, machine, start, end,
    order: "o1", priority: 3, part: null,
    frozen: false, overdraft: 0,
    ...extra,
  };
}

function plan(machines: PlanDoc["machines"], clock = 0, makespan = 0): PlanDoc {
  return { clock, machines, makespan };
}

describe("priority scale", () => {
  it("is a fixed five color scale", () => {
    expect(PRIORITY_COLORS).toHaveLength(5);
    expect(new Set(PRIORITY_COLORS).size).toBe(5);
    for (let p = 1; p <= 5; p++) {
      expect(priorityColor(p)).toBe(PRIORITY_COLORS[p - 1]);
    }
  });

  it("clamps out of range and tolerates missing priorities", () => {
    expect(priorityColor(0)).toBe(PRIORITY_COLORS[0]);
    expect(priorityColor(9)).toBe(PRIORITY_COLORS[4]);
    expect(priorityColor(null)).not.toBe("");
  });
});

describe("lanes", () => {
  it("sorts machines by id and slots by start", () => {
    const lanes = buildLanes(plan({
      "m2": { status: "idle", slots: [slot("b", "m2", 50, 80), slot("a", "m2", 0, 40)] },
      "m1": { status: "down", slots: [] },
    }));
    expect(lanes.map((l) => l.machine)).toEqual(["m1", "m2"]);
    expect(lanes[0].status).toBe("down");
    expect(lanes[1].slots.map((s) => s.op)).toEqual(["a", "b"]);
  });

  it("carries markers and builds unique keys for split parts", () => {
    const lanes = buildLanes(plan({
      "m1": {
        status: "busy",
        slots: [
          slot("x", "m1", 0, 100, { part: 0, frozen: true }),
          slot("x", "m1", 200, 300, { part: 1, overdraft: 20, priority: 5 }),
        ],
      },
    }));
    const [first, second] = lanes[0].slots;
    expect(first.key).not.toBe(second.key);
    expect(first.frozen).toBe(true);
    expect(second.overdraft).toBe(20);
    expect(second.color).toBe(priorityColor(5));
  });

  it("counts slots per machine exactly", () => {
    const counts = slotCounts(plan({
      "m1": { status: "idle", slots: [slot("a", "m1", 0, 10)] },
      "m2": { status: "idle", slots: [] },
    }));
    expect(counts).toEqual({ m1: 1, m2: 0 });
  });
});

describe("waiting pool", () => {
  const base: Omit<OrderDoc, "id" | "state"> = {
    priority: 3, release: 0, arrival: 0, due: 100, strategy: "Force",
    failure_reason: null, completed: null, operations: [],
  };

  it("keeps only orders the dispatcher still owns", () => {
    const pool = waitingPool([
      { ...base, id: "a", state: "done" },
      { ...base, id: "b", state: "manual" },
      { ...base, id: "c", state: "in-progress" },
      { ...base, id: "d", state: "waiting" },
    ]);
    expect(pool.map((p) => p.id).sort()).toEqual(["b", "d"]);
  });

  it("puts hotter orders first", () => {
    const pool = waitingPool([
      { ...base, id: "cool", state: "pending", priority: 2 },
      { ...base, id: "hot", state: "pending", priority: 5 },
    ]);
    expect(pool[0].id).toBe("hot");
  });
});

describe("approval cards", () => {
  const doc = (id: string, kind: string, state = "pending", created = 0): ApprovalDoc =>
    ({ id, kind, created, subject: "o1", state });

  it("routes wait-x timeouts to the manual screen", () => {
    const cards = approvalCards([
      doc("apv-1", "overdraft-prio4"),
      doc("apv-2", "wait-x-timeout"),
      doc("apv-3", "optimization-proposed"),
    ]);
    const routes = Object.fromEntries(cards.map((c) => [c.kind, c.route]));
    expect(routes).toEqual({
      "overdraft-prio4": "decision",
      "wait-x-timeout": "manual",
      "optimization-proposed": "decision",
    });
  });

  it("shows pending requests before resolved ones", () => {
    const cards = approvalCards([
      doc("apv-1", "overdraft-prio4", "approved", 0),
      doc("apv-2", "overdraft-prio4", "pending", 50),
    ]);
    expect(cards[0].id).toBe("apv-2");
  });

  it("folds the extra payload into the detail line", () => {
    const [card] = approvalCards([
      { ...doc("apv-1", "overdraft-prio4"), exceeding: 20, machine: "m1" },
    ]);
    expect(card.detail).toContain("exceeding=20");
    expect(card.detail).toContain("machine=m1");
  });
});

describe("run cards", () => {
  it("keeps the gateway numbers, percent is formatting only", () => {
    const [card] = runCards([{
      run: "run-1", status: "proposed", before: 1440, after: 715,
      improvement: 0.5035, winning: "swap", passes: ["p1", "p2"],
    }]);
    expect(card.before).toBe(1440);
    expect(card.after).toBe(715);
    expect(card.improvementPct).toBeCloseTo(50.3, 5);
    expect(card.passes).toEqual(["p1", "p2"]);
  });
});

describe("plan fingerprint", () => {
  const a = plan({ "m1": { status: "idle", slots: [slot("a", "m1", 0, 60)] } }, 5, 60);

  it("ignores key order", () => {
    expect(canonical({ b: 1, a: [2, { d: 3, c: 4 }] }))
      .toBe(canonical({ a: [2, { c: 4, d: 3 }], b: 1 }));
  });

  it("is stable for identical plans", () => {
    const clone = JSON.parse(JSON.stringify(a)) as PlanDoc;
    expect(planFingerprint(clone)).toBe(planFingerprint(a));
  });

  it("moves when a slot moves", () => {
    const moved = JSON.parse(JSON.stringify(a)) as PlanDoc;
    moved.machines["m1"].slots[0].start = 10;
    expect(planFingerprint(moved)).not.toBe(planFingerprint(a));
  });
});
