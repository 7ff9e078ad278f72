/** Gantt timeline as an SVG string: one lane per machine, one rect per slot
in the viewport. The viewport is the zoom; scrolling moves it. */

import type { Lane, LaneSlot } from "./viewmodel";

export interface Viewport {
  from: number;
  to: number;
}

export interface GanttOptions {
  width?: number;
  laneHeight?: number;
  labelWidth?: number;
}

const TICK_STEPS = [15, 30, 60, 120, 240, 480, 1440, 2880, 10080];

export function tickStep(span: number): number {
  for (const step of TICK_STEPS) {
    if (span / step <= 14) return step;
  }
  return TICK_STEPS[TICK_STEPS.length - 1];
}

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function tooltip(slot: LaneSlot): string {
  const bits = [`${slot.order ?? "?"} / ${slot.op}`, `${slot.start}..${slot.end}`];
  if (slot.part != null) bits.push(`part ${slot.part}`);
  if (slot.priority != null) bits.push(`prio ${slot.priority}`);
  if (slot.frozen) bits.push("frozen");
  if (slot.overdraft) bits.push(`overdraft ${slot.overdraft}`);
  return bits.join(", ");
}

export function renderGantt(lanes: Lane[], view: Viewport, opts: GanttOptions = {}): string {
  const width = opts.width ?? 960;
  const laneH = opts.laneHeight ?? 28;
  const label = opts.labelWidth ?? 110;
  const span = Math.max(1, view.to - view.from);
  const scale = (width - label) / span;
  const x = (t: number) => label + (t - view.from) * scale;
  const height = 24 + lanes.length * laneH;

  const out: string[] = [];
  out.push(
    `<svg class="gantt" xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
    `height="${height}" viewBox="0 0 ${width} ${height}" ` +
    `data-from="${view.from}" data-to="${view.to}">`,
  );

  const step = tickStep(span);
  for (let t = Math.ceil(view.from / step) * step; t <= view.to; t += step) {
    out.push(`<line class="tick" x1="${x(t)}" y1="16" x2="${x(t)}" y2="${height}"/>`);
    out.push(`<text class="tick-label" x="${x(t) + 2}" y="12">${t}</text>`);
  }

  lanes.forEach((lane, i) => {
    const y = 24 + i * laneH;
    const down = lane.status === "down" ? " down" : "";
    out.push(
      `<text class="lane-label${down}" x="4" y="${y + laneH * 0.65}">` +
      `${esc(lane.machine)}</text>`,
    );
    // click target for manual gap picking: x maps back to minutes
    out.push(
      `<rect class="lane-bed" data-machine="${esc(lane.machine)}" x="${label}" ` +
      `y="${y}" width="${width - label}" height="${laneH - 4}"/>`,
    );
    for (const slot of lane.slots) {
      if (slot.end <= view.from || slot.start >= view.to) continue;
      const s = Math.max(view.from, slot.start);
      const e = Math.min(view.to, slot.end);
      const cls = ["slot"];
      if (slot.frozen) cls.push("frozen");
      if (slot.overdraft) cls.push("overdraft");
      const part = slot.part == null ? "" : ` data-part="${slot.part}"`;
      out.push(
        `<g class="${cls.join(" ")}" data-op="${esc(slot.op)}" ` +
        `data-machine="${esc(lane.machine)}"${part}>`,
      );
      out.push(
        `<rect x="${x(s)}" y="${y}" width="${Math.max(1, (e - s) * scale)}" ` +
        `height="${laneH - 4}" fill="${slot.color}"` +
        (slot.frozen ? ` stroke="#f1f5f9" stroke-dasharray="3 2"` : "") + `/>`,
      );
      if (slot.overdraft) {
        // flag the stretch past shift close
        out.push(
          `<path class="overdraft-marker" d="M ${x(s)} ${y} l 6 ${laneH / 2 - 2} ` +
          `l -6 ${laneH / 2 - 2} z" fill="#fef3c7"/>`,
        );
      }
      out.push(`<title>${esc(tooltip(slot))}</title>`);
      out.push("</g>");
    }
  });

  out.push("</svg>");
  return out.join("");
}

/** Inverse of the x mapping: pixel offset inside the SVG back to a minute. */
export function minuteAt(px: number, view: Viewport, opts: GanttOptions = {}): number {
  const width = opts.width ?? 960;
  const label = opts.labelWidth ?? 110;
  const span = Math.max(1, view.to - view.from);
  const scale = (width - label) / span;
  return Math.round(view.from + Math.max(0, px - label) / scale);
}

/** Free stretches of one lane inside the viewport, from rendered slots only.
These are the click targets for manual placement; whether a placement is
legal there is the gateway's call, not ours. */
export function freeGaps(lane: Lane, view: Viewport): Array<[number, number]> {
  const gaps: Array<[number, number]> = [];
  let cursor = view.from;
  const sorted = [...lane.slots].sort((a, b) => a.start - b.start);
  for (const slot of sorted) {
    if (slot.end <= view.from || slot.start >= view.to) continue;
    if (slot.start > cursor) gaps.push([cursor, Math.min(slot.start, view.to)]);
    cursor = Math.max(cursor, slot.end);
  }
  if (cursor < view.to) gaps.push([cursor, view.to]);
  return gaps.filter(([s, e]) => e > s);
}

export function gapAt(lane: Lane, minute: number, view: Viewport): [number, number] | null {
  for (const [s, e] of freeGaps(lane, view)) {
    if (minute >= s && minute < e) return [s, e];
  }
  return null;
}
