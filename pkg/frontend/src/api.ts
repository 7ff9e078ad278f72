/** Typed client for the shopfloor gateway. Every number the console shows
comes out of these payloads; nothing is rescheduled or recomputed here. */

export interface SlotDoc {
  op: string;
  order: string | null;
  priority: number | null;
  machine: string;
  start: number;
  end: number;
  part: number | null;
  frozen: boolean;
  /** minutes the slot may run past shift close; 0 when none */
  overdraft: number;
}

export interface MachineDoc {
  status: string;
  slots: SlotDoc[];
}

export interface PlanDoc {
  clock: number;
  machines: Record<string, MachineDoc>;
  makespan: number;
}

export interface OrderDoc {
  id: string;
  state: string;
  priority: number;
  release: number;
  arrival: number;
  due: number;
  strategy: string | null;
  failure_reason: string | null;
  completed: number | null;
  operations: string[];
}

export interface OperationDoc {
  id: string;
  process: string;
  duration: number;
  seq: number;
  resources: [string, number][];
  slots: SlotDoc[];
}

export interface OrderDetailDoc extends Omit<OrderDoc, "operations"> {
  operations: OperationDoc[];
}

export interface ApprovalDoc {
  id: string;
  kind: string;
  created: number;
  subject: string;
  state: string;
  [extra: string]: unknown;
}

export interface RunDoc {
  run: string;
  status: string;
  before: number;
  after: number;
  improvement: number;
  winning: string | null;
  passes: string[];
}

export interface EventDoc {
  seq: number;
  time: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface EventBatch {
  events: EventDoc[];
  last: number;
  clock: number;
}

export interface WriteAck {
  events: number[];
  clock: number;
}

export interface Verdict {
  ok: boolean;
  reason: string | null;
}

export type Piece = [machine: string, start: number, end: number];

/** Non-2xx answers carry {"error": {"code", "message"}}; keep the code so
conflicts (409 approval-not-pending etc.) can be shown verbatim. */
export class GatewayError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "GatewayError";
  }
}

export type Fetcher = (input: string, init?: RequestInit) => Promise<Response>;

export class Gateway {
  constructor(
    readonly base: string,
    private readonly fetcher: Fetcher = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetcher(this.base + path, init);
    const body = await res.json().catch(() => null);
    if (!res.ok) {
      const err = (body as { error?: { code?: string; message?: string } } | null)?.error;
      throw new GatewayError(res.status, err?.code ?? "http-error",
        err?.message ?? `${res.status} on ${path}`);
    }
    return body as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  plan(): Promise<PlanDoc> {
    return this.request("/plan");
  }

  orders(): Promise<{ orders: OrderDoc[] }> {
    return this.request("/orders");
  }

  order(id: string): Promise<OrderDetailDoc> {
    return this.request(`/orders/${encodeURIComponent(id)}`);
  }

  approvals(): Promise<{ approvals: ApprovalDoc[] }> {
    return this.request("/approvals");
  }

  optimizations(): Promise<{ optimizations: RunDoc[] }> {
    return this.request("/optimizations");
  }

  metrics(): Promise<Record<string, unknown>> {
    return this.request("/metrics");
  }

  events(after = 0): Promise<EventBatch> {
    return this.request(`/events?after=${after}`);
  }

  submitOrder(order: object): Promise<WriteAck> {
    return this.post("/orders", order);
  }

  resolveApproval(id: string, decision: "approve" | "reject"): Promise<WriteAck> {
    return this.post(`/approvals/${encodeURIComponent(id)}`, { decision });
  }

  manual(order: string, body: object): Promise<WriteAck> {
    return this.post(`/orders/${encodeURIComponent(order)}/manual`, body);
  }

  optimizeNow(): Promise<WriteAck> {
    return this.post("/optimize", {});
  }

  decideRun(run: string, decision: "accept" | "deny" | "restore"): Promise<WriteAck> {
    return this.post(`/optimizations/${encodeURIComponent(run)}`, { decision });
  }

  inject(disturbance: object): Promise<WriteAck> {
    return this.post("/disturbances", disturbance);
  }

  advance(until: number): Promise<WriteAck> {
    return this.post("/clock/advance", { until });
  }

  validatePlacement(order: string, operation: string, pieces: Piece[]): Promise<Verdict> {
    return this.post("/validate/placement", { order, operation, pieces });
  }
}
