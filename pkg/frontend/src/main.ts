/** Browser shell: wires the gateway client, the event stream, and the
panels into the static page. All state here is view state; the engine's
state lives behind the gateway and is only ever fetched. */

import {
  Gateway,
  GatewayError,
  type OrderDetailDoc,
  type PlanDoc,
} from "./api";
import { decideApproval, decideOptimization } from "./actions";
import { freeGaps, gapAt, minuteAt, renderGantt, type Viewport } from "./gantt";
import {
  PlacementDraft,
  changeRestrictions,
  commit,
  deleteAndReplace,
  explicitSplit,
  outsource,
  preview,
  redispatch,
} from "./manual";
import { EventStream } from "./stream";
import {
  approvalCards,
  buildLanes,
  planFingerprint,
  runCards,
  waitingPool,
  type Lane,
} from "./viewmodel";

const POLL_MS = 1500;
const GANTT_WIDTH = 960;
const LABEL_WIDTH = 110;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function esc(text: unknown): string {
  return String(text ?? "")
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const params = new URLSearchParams(location.search);
const api = new Gateway(params.get("api") ?? "/api");

let plan: PlanDoc | null = null;
let lanes: Lane[] = [];
let view: Viewport = { from: 0, to: 1440 };
let fingerprint = "";
let draft: PlacementDraft | null = null;
let manualOrder: OrderDetailDoc | null = null;

const stream = new EventStream((after) => api.events(after), {
  onEvents(events) {
    // restyle in place: fresh plan, no page reload
    for (const ev of events) logLine(`#${ev.seq} t=${ev.time} ${ev.kind}`);
    void refreshAll();
  },
  onGap() {
    logLine("stream gap: full re-fetch");
    void refreshAll();
  },
});

function toast(message: string, ok = false): void {
  const box = el("toast");
  box.textContent = message;
  box.className = ok ? "toast ok" : "toast err";
  setTimeout(() => {
    box.className = "toast hidden";
  }, 4000);
}

function surface(err: unknown): void {
  if (err instanceof GatewayError) {
    toast(`${err.code}: ${err.message}`);
  } else {
    toast(String(err));
  }
}

function logLine(text: string): void {
  const log = el("event-log");
  const line = document.createElement("div");
  line.textContent = text;
  log.prepend(line);
  while (log.childElementCount > 200) log.lastElementChild?.remove();
}

// -- rendering ---------------------------------------------------------------

function renderHeader(): void {
  if (!plan) return;
  el("clock").textContent = String(plan.clock);
  el("makespan").textContent = String(plan.makespan);
  el("staleness").className = stream.stale ? "stale on" : "stale";
}

function renderPlanPanel(): void {
  if (!plan) return;
  lanes = buildLanes(plan);
  el("gantt").innerHTML = renderGantt(lanes, view, {
    width: GANTT_WIDTH,
    labelWidth: LABEL_WIDTH,
  });
}

async function renderMetrics(): Promise<void> {
  const metrics = await api.metrics();
  const rows = Object.entries(metrics)
    .filter(([, v]) => typeof v !== "object")
    .map(([k, v]) => `<span class="kpi"><b>${esc(k)}</b> ${esc(v)}</span>`);
  el("metrics").innerHTML = rows.join(" ");
}

async function renderApprovals(): Promise<void> {
  const { approvals } = await api.approvals();
  const cards = approvalCards(approvals);
  el("approvals").innerHTML = cards.map((c) => {
    const buttons = c.state !== "pending"
      ? `<span class="badge">${esc(c.state)}</span>`
      : c.route === "manual"
        ? `<button data-open-manual="${esc(c.subject)}">open manual screen</button>`
        : `<button data-approval="${esc(c.id)}" data-decision="approve">approve</button>
           <button data-approval="${esc(c.id)}" data-decision="reject">reject</button>`;
    return `<div class="card approval ${esc(c.state)}">
      <div class="card-title">${esc(c.id)} ${esc(c.kind)}</div>
      <div class="card-sub">${esc(c.subject)} at t=${esc(c.created)} ${esc(c.detail)}</div>
      <div class="card-actions">${buttons}</div>
    </div>`;
  }).join("") || `<div class="empty">no approvals</div>`;
}

async function renderRuns(): Promise<void> {
  const { optimizations } = await api.optimizations();
  const cards = runCards(optimizations);
  el("runs").innerHTML = cards.map((c) => {
    const actions = c.status === "proposed"
      ? `<button data-run="${esc(c.run)}" data-decision="accept">accept</button>
         <button data-run="${esc(c.run)}" data-decision="deny">deny</button>`
      : c.status === "accepted"
        ? `<button data-run="${esc(c.run)}" data-decision="restore">restore</button>`
        : `<span class="badge">${esc(c.status)}</span>`;
    return `<div class="card run ${esc(c.status)}">
      <div class="card-title">${esc(c.run)} ${esc(c.status)}</div>
      <div class="card-sub">before ${esc(c.before)}, after ${esc(c.after)}
        (${esc(c.improvementPct)}%), winner ${esc(c.winning ?? "-")}</div>
      <div class="card-sub">passes: ${esc(c.passes.join(", ") || "-")}</div>
      <div class="card-actions">${actions}</div>
    </div>`;
  }).join("") || `<div class="empty">no optimization runs yet</div>`;
}

async function renderPool(): Promise<void> {
  const { orders } = await api.orders();
  const pool = waitingPool(orders);
  el("pool").innerHTML = pool.map((p) => `
    <div class="row" data-order-row="${esc(p.id)}">
      <span class="prio p${p.priority}">${p.priority}</span>
      <b>${esc(p.id)}</b>
      <span class="badge">${esc(p.state)}</span>
      <span>due ${esc(p.due)}</span>
      <span>${esc(p.strategy ?? "-")}</span>
      <span class="reason">${esc(p.reason ?? "")}</span>
      <button data-open-manual="${esc(p.id)}">manual</button>
    </div>`).join("") || `<div class="empty">nothing waiting</div>`;

  el("orders").innerHTML = orders.map((o) => `
    <div class="row" data-order-detail="${esc(o.id)}">
      <span class="prio p${o.priority}">${o.priority}</span>
      <b>${esc(o.id)}</b>
      <span class="badge">${esc(o.state)}</span>
      <span>due ${esc(o.due)}</span>
      <span>${esc(o.strategy ?? "-")}</span>
      <span>${o.completed == null ? "" : `done t=${o.completed}`}</span>
    </div>`).join("");
}

async function renderOrderDetail(id: string): Promise<void> {
  const detail = await api.order(id);
  el("order-detail").innerHTML = `
    <div class="card">
      <div class="card-title">${esc(detail.id)} (${esc(detail.state)})</div>
      <div class="card-sub">prio ${detail.priority}, release ${detail.release},
        due ${detail.due}, strategy ${esc(detail.strategy ?? "-")}
        ${detail.failure_reason ? `, reason ${esc(detail.failure_reason)}` : ""}</div>
      ${detail.operations.map((op) => `
        <div class="op-row">
          <b>${esc(op.id)}</b> ${esc(op.process)} ${op.duration}min seq ${op.seq}
          ${op.resources.map(([r, n]) => `<span class="badge">${esc(r)}x${n}</span>`).join("")}
          <div>${op.slots.map((s) =>
            `<span class="chip">${esc(s.machine)} ${s.start}..${s.end}` +
            `${s.overdraft ? " overdraft" : ""}${s.frozen ? " frozen" : ""}</span>`).join("")}</div>
        </div>`).join("")}
    </div>`;
}

async function refreshAll(): Promise<void> {
  try {
    plan = await api.plan();
    fingerprint = planFingerprint(plan);
    el("fingerprint").textContent = fingerprint;
    renderHeader();
    renderPlanPanel();
    await Promise.all([renderMetrics(), renderApprovals(), renderRuns(), renderPool()]);
  } catch (err) {
    surface(err);
  }
  renderHeader();
}

// -- manual screen -----------------------------------------------------------

async function openManual(orderId: string): Promise<void> {
  try {
    manualOrder = await api.order(orderId);
  } catch (err) {
    surface(err);
    return;
  }
  draft = null;
  el("manual-order").textContent = `${manualOrder.id} (${manualOrder.state})`;
  const ops = manualOrder.operations;
  el<HTMLSelectElement>("manual-op").innerHTML = ops.map(
    (op) => `<option value="${esc(op.id)}">${esc(op.id)} ${op.duration}min</option>`,
  ).join("");
  el("manual-verdict").textContent = "";
  el("manual-pieces").textContent = "";
  renderOrderDetail(orderId).catch(surface);
}

function armDraft(): void {
  if (!manualOrder) return;
  const select = el<HTMLSelectElement>("manual-op");
  const op = manualOrder.operations.find((o) => o.id === select.value);
  if (!op) return;
  draft = new PlacementDraft(manualOrder.id, op.id, op.duration);
  el("manual-pieces").textContent = `pick free gaps, ${draft.remaining()}min to cover`;
  el("manual-verdict").textContent = "";
}

async function previewDraft(): Promise<void> {
  if (!draft) return;
  try {
    const verdict = await preview(api, draft);
    el("manual-verdict").innerHTML = verdict.ok
      ? `<span class="ok">placement valid</span>`
      : `<span class="err">rejected: ${esc(verdict.reason ?? "unknown")}</span>`;
  } catch (err) {
    surface(err);
  }
}

async function commitDraft(): Promise<void> {
  if (!draft) return;
  try {
    await commit(api, draft);
    toast("placed", true);
    draft = null;
    await refreshAll();
  } catch (err) {
    surface(err); // violation list stays visible, nothing committed
  }
}

function onGanttClick(event: MouseEvent): void {
  const target = event.target as Element | null;
  const bed = target?.closest(".lane-bed");
  if (!bed || !draft || !plan) return;
  const machine = bed.getAttribute("data-machine") ?? "";
  const lane = lanes.find((l) => l.machine === machine);
  if (!lane) return;
  const svg = el("gantt").querySelector("svg");
  const box = svg?.getBoundingClientRect();
  if (!box) return;
  const minute = minuteAt(event.clientX - box.left, view, {
    width: GANTT_WIDTH,
    labelWidth: LABEL_WIDTH,
  });
  const gap = gapAt(lane, minute, view);
  if (!gap) return;
  const took = draft.addGap(machine, Math.max(gap[0], minute), gap[1]);
  if (took === 0) return;
  el("manual-pieces").textContent =
    `${draft.pieces.map(([m, s, e]) => `${m} ${s}..${e}`).join(", ")}` +
    ` (${draft.remaining()}min left)`;
  if (draft.complete()) void previewDraft();
}

// -- wiring ------------------------------------------------------------------

function wire(): void {
  el("gantt").addEventListener("click", onGanttClick);

  document.body.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    if (!target) return;
    const approval = target.getAttribute("data-approval");
    const decision = target.getAttribute("data-decision");
    if (approval && (decision === "approve" || decision === "reject")) {
      decideApproval(api, approval, decision)
        .then(() => refreshAll())
        .catch(surface);
      return;
    }
    const run = target.getAttribute("data-run");
    if (run && (decision === "accept" || decision === "deny" || decision === "restore")) {
      decideOptimization(api, run, decision)
        .then(() => refreshAll())
        .catch(surface);
      return;
    }
    const manual = target.getAttribute("data-open-manual");
    if (manual) {
      void openManual(manual);
      return;
    }
    const row = target.closest("[data-order-detail]");
    if (row) {
      const id = row.getAttribute("data-order-detail");
      if (id) renderOrderDetail(id).catch(surface);
    }
  });

  el("zoom-in").addEventListener("click", () => {
    const mid = (view.from + view.to) / 2;
    const span = Math.max(60, (view.to - view.from) / 2);
    view = { from: Math.max(0, mid - span / 2), to: mid + span / 2 };
    renderPlanPanel();
  });
  el("zoom-out").addEventListener("click", () => {
    const mid = (view.from + view.to) / 2;
    const span = (view.to - view.from) * 2;
    view = { from: Math.max(0, mid - span / 2), to: mid + span / 2 };
    renderPlanPanel();
  });
  el("pan-left").addEventListener("click", () => {
    const span = view.to - view.from;
    view = { from: Math.max(0, view.from - span / 2), to: Math.max(span, view.to - span / 2) };
    renderPlanPanel();
  });
  el("pan-right").addEventListener("click", () => {
    const span = view.to - view.from;
    view = { from: view.from + span / 2, to: view.to + span / 2 };
    renderPlanPanel();
  });

  el("advance").addEventListener("click", () => {
    const until = Number(el<HTMLInputElement>("advance-until").value);
    api.advance(until).then(() => refreshAll()).catch(surface);
  });
  el("optimize-now").addEventListener("click", () => {
    api.optimizeNow().then((ack) => {
      toast(ack.events.length ? "optimization proposed" : "no lull, nothing proposed", true);
      return refreshAll();
    }).catch(surface);
  });

  el("manual-arm").addEventListener("click", armDraft);
  el("manual-clear").addEventListener("click", () => {
    draft?.clear();
    el("manual-pieces").textContent = draft ? `${draft.remaining()}min to cover` : "";
    el("manual-verdict").textContent = "";
  });
  el("manual-preview").addEventListener("click", () => void previewDraft());
  el("manual-commit").addEventListener("click", () => void commitDraft());

  el("manual-split").addEventListener("click", () => {
    if (!manualOrder) return;
    const n = Number(el<HTMLInputElement>("manual-split-n").value ?? 2);
    explicitSplit(api, manualOrder.id, n).then(() => refreshAll()).catch(surface);
  });
  el("manual-outsource").addEventListener("click", () => {
    if (!manualOrder) return;
    outsource(api, manualOrder.id).then(() => refreshAll()).catch(surface);
  });
  el("manual-redispatch").addEventListener("click", () => {
    if (!manualOrder) return;
    redispatch(api, manualOrder.id).then(() => refreshAll()).catch(surface);
  });
  el("manual-change").addEventListener("click", () => {
    if (!manualOrder) return;
    const priority = Number(el<HTMLInputElement>("manual-priority").value) || undefined;
    const due = Number(el<HTMLInputElement>("manual-due").value) || undefined;
    changeRestrictions(api, manualOrder.id, { priority, due })
      .then(() => refreshAll()).catch(surface);
  });
  el("manual-replace").addEventListener("click", () => {
    if (!manualOrder) return;
    const victim = el<HTMLInputElement>("manual-victim").value.trim();
    if (!victim) return;
    deleteAndReplace(api, manualOrder.id, victim).then(() => refreshAll()).catch(surface);
  });
}

async function start(): Promise<void> {
  wire();
  await refreshAll();
  if (plan) view = { from: 0, to: Math.max(1440, plan.makespan || 1440) };
  renderPlanPanel();
  setInterval(() => void stream.poll().then(renderHeader), POLL_MS);
}

void start();
