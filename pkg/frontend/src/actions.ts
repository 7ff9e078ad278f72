/** The write paths behind the console's buttons. The UI and the tests call
these same functions, so "approved through the console" means exactly one
documented gateway write. */

import type { Gateway, WriteAck } from "./api";

export function decideApproval(
  api: Gateway,
  approvalId: string,
  decision: "approve" | "reject",
): Promise<WriteAck> {
  return api.resolveApproval(approvalId, decision);
}

export function decideOptimization(
  api: Gateway,
  run: string,
  decision: "accept" | "deny" | "restore",
): Promise<WriteAck> {
  return api.decideRun(run, decision);
}
