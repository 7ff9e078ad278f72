/** Pull-based event stream with sequence-number resume.

The gateway hands out every trace event with seq > after, and engine
sequence numbers are contiguous from 1. Any hole means the view missed
something it cannot reconstruct (server swapped out underneath us), so the
sink is told to re-fetch everything and the stream flags itself stale until
the next clean poll. */

import type { EventBatch, EventDoc } from "./api";

export interface StreamSink {
  onEvents(events: EventDoc[], clock: number): void;
  onGap(): void;
}

function contiguous(after: number, events: EventDoc[]): boolean {
  let expect = after + 1;
  for (const ev of events) {
    if (ev.seq !== expect) return false;
    expect += 1;
  }
  return true;
}

export class EventStream {
  last = 0;
  stale = false;

  constructor(
    private readonly pull: (after: number) => Promise<EventBatch>,
    private readonly sink: StreamSink,
  ) {}

  async poll(): Promise<void> {
    let batch: EventBatch;
    try {
      batch = await this.pull(this.last);
    } catch {
      // gateway unreachable: keep the cursor, show staleness, retry next tick
      this.stale = true;
      return;
    }
    if (!contiguous(this.last, batch.events)) {
      this.stale = true;
      this.last = batch.last;
      this.sink.onGap();
      return;
    }
    if (batch.events.length > 0) {
      this.last = batch.last;
      this.sink.onEvents(batch.events, batch.clock);
    }
    this.stale = false;
  }
}
