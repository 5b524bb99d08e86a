// Event stream with exponential-backoff reconnect.
//
// Wraps an EventSource-shaped transport so tests can drive it with a fake.
// On every (re)connect the subscription resumes from the last generation the
// client converged to, so a reload that happened while disconnected is
// replayed by the gateway and the client catches up in one cycle.

import type { GatewayEvent } from "./types.js";

// handler params are `any` so the browser EventSource satisfies this shape
// under strict function variance
export interface EventSourceLike {
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface EventStreamHandlers {
  onEvent: (event: GatewayEvent) => void;
  onStatus: (status: "connecting" | "live" | "disconnected") => void;
}

export interface BackoffOptions {
  baseDelayMs?: number;
  maxDelayMs?: number;
}

export class EventStream {
  private source: EventSourceLike | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private attempt = 0;
  private stopped = false;
  private readonly baseDelayMs: number;
  private readonly maxDelayMs: number;

  constructor(
    private readonly urlFor: (since: number) => string,
    private readonly sinceGeneration: () => number,
    private readonly factory: EventSourceFactory,
    private readonly handlers: EventStreamHandlers,
    options: BackoffOptions = {},
  ) {
    this.baseDelayMs = options.baseDelayMs ?? 500;
    this.maxDelayMs = options.maxDelayMs ?? 15000;
  }

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.source?.close();
    this.source = null;
  }

  /** Delay before reconnect attempt n (exported for the status line). */
  delayFor(attempt: number): number {
    return Math.min(this.baseDelayMs * 2 ** attempt, this.maxDelayMs);
  }

  private connect(): void {
    if (this.stopped) return;
    this.handlers.onStatus(this.attempt === 0 ? "connecting" : "disconnected");
    const source = this.factory(this.urlFor(this.sinceGeneration()));
    this.source = source;
    source.onopen = () => {
      this.attempt = 0;
      this.handlers.onStatus("live");
    };
    source.onmessage = (ev: { data: string }) => {
      let event: GatewayEvent;
      try {
        event = JSON.parse(ev.data) as GatewayEvent;
      } catch {
        return; // keepalives and malformed frames are not events
      }
      this.handlers.onEvent(event);
    };
    source.onerror = () => {
      source.close();
      if (this.source === source) this.source = null;
      this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.reconnectTimer !== null) return;
    this.handlers.onStatus("disconnected");
    const delay = this.delayFor(this.attempt);
    this.attempt += 1;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay);
  }
}
