/** Manual dispatch: the dispatcher builds a placement by clicking free gaps,
previews it against the gateway's validator, and only then commits. All of
the other manual actions are one-call gateway writes. */

import type { Gateway, Piece, Verdict, WriteAck } from "./api";

export class PlacementDraft {
  pieces: Piece[] = [];

  constructor(
    readonly order: string,
    readonly operation: string,
    readonly duration: number,
  ) {}

  covered(): number {
    return this.pieces.reduce((sum, [, start, end]) => sum + (end - start), 0);
  }

  remaining(): number {
    return this.duration - this.covered();
  }

  complete(): boolean {
    return this.remaining() === 0;
  }

  /** Take up to the remaining need out of one clicked gap; returns minutes taken. */
  addGap(machine: string, start: number, end: number): number {
    const take = Math.min(end - start, this.remaining());
    if (take <= 0) return 0;
    this.pieces.push([machine, start, start + take]);
    return take;
  }

  clear(): void {
    this.pieces = [];
  }
}

/** What-if: the gateway tries the placement and rolls it back. */
export function preview(api: Gateway, draft: PlacementDraft): Promise<Verdict> {
  return api.validatePlacement(draft.order, draft.operation, draft.pieces);
}

export function commit(api: Gateway, draft: PlacementDraft): Promise<WriteAck> {
  return api.manual(draft.order, {
    action: "place",
    operation: draft.operation,
    pieces: draft.pieces,
  });
}

export function explicitSplit(api: Gateway, order: string, n: number): Promise<WriteAck> {
  return api.manual(order, { action: "split", n });
}

export function changeRestrictions(
  api: Gateway,
  order: string,
  changes: { priority?: number; due?: number; strategy?: string },
): Promise<WriteAck> {
  return api.manual(order, { action: "change", ...changes });
}

export function deleteAndReplace(api: Gateway, order: string, victim: string): Promise<WriteAck> {
  return api.manual(order, { action: "delete-replace", victim });
}

export function outsource(api: Gateway, order: string): Promise<WriteAck> {
  return api.manual(order, { action: "outsource" });
}

export function redispatch(api: Gateway, order: string, strategy = "Force"): Promise<WriteAck> {
  return api.manual(order, { action: "dispatch", strategy });
}
