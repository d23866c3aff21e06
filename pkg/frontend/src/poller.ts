/**
 * Monitor polling loop.
 *
 * One request at a time: if the previous poll is still in flight when
 * the interval fires, that tick is skipped rather than queued. Every
 * request carries a sequence number, and a response is dropped when a
 * newer one has already been delivered, so an out-of-order arrival can
 * never roll the chart backwards.
 */

import { ConsoleApi } from "./api.js";
import { buildMonitorViewModel, MonitorViewModel } from "./monitor.js";

export const DEFAULT_POLL_INTERVAL_MS = 2_000;

export interface PollerOptions {
  fromDay: number;
  toDay: number;
  intervalMs?: number;
}

export class MonitorPoller {
  private readonly api: ConsoleApi;
  private readonly experimentId: string;
  private readonly fromDay: number;
  private readonly toDay: number;
  private readonly intervalMs: number;
  private readonly onUpdate: (vm: MonitorViewModel) => void;
  private readonly onError: (err: unknown) => void;

  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;
  private nextSeq = 0;
  private deliveredSeq = 0;
  private skippedTicks = 0;

  constructor(
    api: ConsoleApi,
    experimentId: string,
    options: PollerOptions,
    onUpdate: (vm: MonitorViewModel) => void,
    onError: (err: unknown) => void = () => {},
  ) {
    this.api = api;
    this.experimentId = experimentId;
    this.fromDay = options.fromDay;
    this.toDay = options.toDay;
    this.intervalMs = options.intervalMs ?? DEFAULT_POLL_INTERVAL_MS;
    this.onUpdate = onUpdate;
    this.onError = onError;
  }

  start(): void {
    if (this.timer !== null) {
      return;
    }
    this.timer = setInterval(() => {
      void this.tick();
    }, this.intervalMs);
    void this.tick();
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** Number of interval ticks coalesced away because a poll was already
   * in flight. Exposed for tests and the debug footer. */
  get coalescedTicks(): number {
    return this.skippedTicks;
  }

  async tick(): Promise<void> {
    if (this.inFlight) {
      this.skippedTicks += 1;
      return;
    }
    this.inFlight = true;
    this.nextSeq += 1;
    const seq = this.nextSeq;
    try {
      const payload = await this.api.fetchMonitor(
        this.experimentId,
        this.fromDay,
        this.toDay,
      );
      this.deliver(seq, payload);
    } catch (err) {
      this.onError(err);
    } finally {
      this.inFlight = false;
    }
  }

  /** Hand a response to the view if and only if it is newer than the
   * last delivered one. Stale responses are discarded. */
  deliver(seq: number, payload: unknown): boolean {
    if (seq <= this.deliveredSeq) {
      return false;
    }
    this.deliveredSeq = seq;
    this.onUpdate(buildMonitorViewModel(payload));
    return true;
  }

  /** Reserve a sequence number for a caller-managed request, so tests
   * and manual refreshes share the staleness bookkeeping. */
  claimSeq(): number {
    this.nextSeq += 1;
    return this.nextSeq;
  }
}
