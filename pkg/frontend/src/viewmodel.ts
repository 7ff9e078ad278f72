/** Shapes gateway payloads for rendering. Pure functions only: sorting,
grouping, labeling. Placement decisions stay on the other side of the wire. */

import type { ApprovalDoc, OrderDoc, PlanDoc, RunDoc, SlotDoc } from "./api";

/** Fixed five-step priority scale, 1 = cold, 5 = urgent. */
export const PRIORITY_COLORS = [
  "#64748b",
  "#38bdf8",
  "#22c55e",
  "#f59e0b",
  "#ef4444",
] as const;

const NO_PRIORITY = "#334155";

export function priorityColor(priority: number | null | undefined): string {
  if (priority == null) return NO_PRIORITY;
  const step = Math.min(5, Math.max(1, Math.round(priority)));
  return PRIORITY_COLORS[step - 1];
}

export interface LaneSlot {
  key: string;
  op: string;
  order: string | null;
  priority: number | null;
  start: number;
  end: number;
  part: number | null;
  frozen: boolean;
  /** overdraft tail in minutes, 0 when the slot respects shift close */
  overdraft: number;
  color: string;
}

export interface Lane {
  machine: string;
  status: string;
  slots: LaneSlot[];
}

function laneSlot(doc: SlotDoc): LaneSlot {
  return {
    key: doc.part == null ? doc.op : `${doc.op}#${doc.part}`,
    op: doc.op,
    order: doc.order,
    priority: doc.priority,
    start: doc.start,
    end: doc.end,
    part: doc.part,
    frozen: doc.frozen,
    overdraft: doc.overdraft,
    color: priorityColor(doc.priority),
  };
}

export function buildLanes(plan: PlanDoc): Lane[] {
  return Object.keys(plan.machines).sort().map((machine) => {
    const doc = plan.machines[machine];
    const slots = doc.slots.map(laneSlot);
    slots.sort((a, b) => a.start - b.start || a.key.localeCompare(b.key));
    return { machine, status: doc.status, slots };
  });
}

export function slotCounts(plan: PlanDoc): Record<string, number> {
  const counts: Record<string, number> = {};
  for (const [machine, doc] of Object.entries(plan.machines)) {
    counts[machine] = doc.slots.length;
  }
  return counts;
}

/** Order states that sit in front of the dispatcher instead of on the plan. */
export const POOL_STATES: readonly string[] = ["pending", "waiting", "manual", "failed"];

export interface PoolEntry {
  id: string;
  state: string;
  priority: number;
  due: number;
  strategy: string | null;
  reason: string | null;
}

export function waitingPool(orders: OrderDoc[]): PoolEntry[] {
  return orders
    .filter((o) => POOL_STATES.includes(o.state))
    .map((o) => ({
      id: o.id,
      state: o.state,
      priority: o.priority,
      due: o.due,
      strategy: o.strategy,
      reason: o.failure_reason,
    }))
    .sort((a, b) => b.priority - a.priority || a.due - b.due || a.id.localeCompare(b.id));
}

export interface ApprovalCard {
  id: string;
  kind: string;
  created: number;
  subject: string;
  state: string;
  /** wait-x-timeout items are handled on the manual screen, not by a yes/no. */
  route: "decision" | "manual";
  detail: string;
}

const CARD_KEYS = ["id", "kind", "created", "subject", "state"];

export function approvalCards(approvals: ApprovalDoc[]): ApprovalCard[] {
  const cards = approvals.map((a) => ({
    id: a.id,
    kind: a.kind,
    created: a.created,
    subject: a.subject,
    state: a.state,
    route: (a.kind === "wait-x-timeout" ? "manual" : "decision") as "decision" | "manual",
    detail: Object.entries(a)
      .filter(([key]) => !CARD_KEYS.includes(key))
      .map(([key, value]) => `${key}=${String(value)}`)
      .sort()
      .join(" "),
  }));
  cards.sort((a, b) => {
    const pending = Number(b.state === "pending") - Number(a.state === "pending");
    return pending || a.created - b.created || a.id.localeCompare(b.id);
  });
  return cards;
}

export interface RunCard {
  run: string;
  status: string;
  before: number;
  after: number;
  /** gateway improvement fraction shown as a percentage, formatting only */
  improvementPct: number;
  winning: string | null;
  passes: string[];
}

export function runCards(runs: RunDoc[]): RunCard[] {
  return runs.map((r) => ({
    run: r.run,
    status: r.status,
    before: r.before,
    after: r.after,
    improvementPct: Math.round(r.improvement * 1000) / 10,
    winning: r.winning,
    passes: r.passes,
  }));
}

/** Canonical JSON: object keys sorted, no whitespace. */
export function canonical(value: unknown): string {
  if (Array.isArray(value)) {
    return `[${value.map(canonical).join(",")}]`;
  }
  if (value !== null && typeof value === "object") {
    const entries = Object.keys(value as Record<string, unknown>).sort().map(
      (key) => `${JSON.stringify(key)}:${canonical((value as Record<string, unknown>)[key])}`,
    );
    return `{${entries.join(",")}}`;
  }
  return JSON.stringify(value);
}

/** FNV-1a over the canonical plan; change detection for the view, nothing more. */
export function planFingerprint(plan: PlanDoc): string {
  const text = canonical(plan);
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash.toString(16).padStart(8, "0");
}
