// Poll the trace endpoint once per second while a turn is running. The ask
// response already carries the finished trace; polling exists so a page that
// joins mid-run (or a run driven elsewhere) still converges on the result.

import { ConnectionLost, ServiceError, ServiceClient } from "./api.js";
import type { TraceDocument } from "./types.js";

export const POLL_INTERVAL_MS = 1000;

export interface PollCallbacks {
  onTrace: (doc: TraceDocument) => void;
  onConnectionLoss?: (err: ConnectionLost) => void;
  onRecovered?: () => void;
}

export class TracePoller {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;
  private lost = false;

  constructor(
    private readonly client: ServiceClient,
    private readonly sessionId: string,
    private readonly turn: number,
    private readonly callbacks: PollCallbacks,
  ) {}

  start(): void {
    this.stopped = false;
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
  }

  private schedule(): void {
    if (this.stopped) return;
    this.timer = setTimeout(() => void this.tick(), POLL_INTERVAL_MS);
  }

  private async tick(): Promise<void> {
    if (this.stopped) return;
    try {
      const doc = await this.client.trace(this.sessionId, this.turn);
      if (this.lost) {
        this.lost = false;
        this.callbacks.onRecovered?.();
      }
      this.stop();
      this.callbacks.onTrace(doc);
    } catch (err) {
      if (err instanceof ServiceError && err.status === 404) {
        // turn not finished yet, keep polling
        if (this.lost) {
          this.lost = false;
          this.callbacks.onRecovered?.();
        }
        this.schedule();
        return;
      }
      if (err instanceof ConnectionLost) {
        this.lost = true;
        this.callbacks.onConnectionLoss?.(err);
        this.schedule();
        return;
      }
      throw err;
    }
  }
}
