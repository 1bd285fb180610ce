// Long-poll loop with a since-cursor. One poller per open session view.

import type { ServiceClient } from "./api.js";
import type { EventRecord } from "./types.js";

export class EventPoller {
  private since = 0;
  private stopped = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private client: ServiceClient,
    private sessionId: string,
    private onEvents: (events: EventRecord[]) => void,
    private onError: (error: unknown) => void = () => {},
    private intervalMs = 1000,
    private waitMs = 900,
  ) {}

  start(): void {
    this.stopped = false;
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
  }

  private async tick(): Promise<void> {
    if (this.stopped) return;
    try {
      const events = await this.client.fetchEvents(this.sessionId, this.since, this.waitMs);
      if (events.length > 0) {
        this.since = events[events.length - 1].seq;
        this.onEvents(events);
      }
    } catch (error) {
      this.onError(error);
    }
    if (!this.stopped) {
      this.timer = setTimeout(() => void this.tick(), this.intervalMs);
    }
  }
}
