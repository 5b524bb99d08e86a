// Controller: owns the state, the event stream and the refresh timer.
// Reload events refetch the ui-config and re-render in place (no page
// reload); staleness events badge the affected devices until fresh data
// arrives; the open datasheet re-polls live values on a fixed interval.

import { GatewayApi, UnknownDeviceError } from "./api.js";
import { EventStream, type EventSourceFactory } from "./events.js";
import { render, type RenderCallbacks } from "./render.js";
import {
  initialState,
  reduce,
  type Action,
  type ClientState,
  type View,
} from "./state.js";
import type { GatewayEvent } from "./types.js";

export interface AppOptions {
  refreshMs?: number;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
}

export class App {
  private state: ClientState = initialState;
  private readonly stream: EventStream;
  private refreshTimer: ReturnType<typeof setInterval> | null = null;
  private readonly refreshMs: number;

  constructor(
    private readonly api: GatewayApi,
    sourceFactory: EventSourceFactory,
    private readonly root: HTMLElement,
    options: AppOptions = {},
  ) {
    this.refreshMs = options.refreshMs ?? 2000;
    this.stream = new EventStream(
      (since) => this.api.eventsUrl(since),
      () => this.state.knownGeneration,
      sourceFactory,
      {
        onEvent: (event) => this.onGatewayEvent(event),
        onStatus: (status) => this.onConnection(status),
      },
      { baseDelayMs: options.reconnectBaseMs, maxDelayMs: options.reconnectMaxMs },
    );
  }

  getState(): ClientState {
    return this.state;
  }

  dispatch(action: Action): void {
    this.state = reduce(this.state, action);
    this.renderNow();
  }

  private readonly callbacks: RenderCallbacks = {
    onOpenDevice: (mrid) => this.openDevice(mrid),
    onBackToGrid: () => this.navigate({ kind: "grid" }),
    onSetpoint: (mrid, attribute, value) => void this.sendSetpoint(mrid, attribute, value),
    onRefreshConfig: () => void this.refreshConfig(),
  };

  private renderNow(): void {
    render(this.root, this.state, this.callbacks);
  }

  async start(): Promise<void> {
    this.renderNow();
    this.stream.start();
    await this.refreshConfig();
  }

  stop(): void {
    this.stream.stop();
    this.stopRefreshTimer();
  }

  async refreshConfig(): Promise<void> {
    try {
      const config = await this.api.uiConfig();
      this.dispatch({ type: "config-loaded", config });
    } catch (err) {
      this.dispatch({ type: "config-failed", error: String(err) });
    }
  }

  private onConnection(status: "connecting" | "live" | "disconnected"): void {
    const wasDown = this.state.connection === "disconnected";
    this.dispatch({ type: "connection", status });
    if (status === "live" && wasDown) {
      // a gateway bounce may not replay anything: converge by refetching
      void this.refreshConfig();
    }
  }

  private onGatewayEvent(event: GatewayEvent): void {
    this.dispatch({ type: "gateway-event", event });
    if (event.type === "reload") {
      void this.refreshConfig();
      const view = this.state.view;
      if (view.kind === "datasheet") {
        void this.loadDevice(view.mrid); // the device may have changed or vanished
      }
    }
  }

  navigate(view: View): void {
    this.dispatch({ type: "navigate", view });
    if (view.kind === "grid") {
      this.stopRefreshTimer();
    }
  }

  openDevice(mrid: string): void {
    this.navigate({ kind: "datasheet", mrid });
    void this.loadDevice(mrid);
    this.startRefreshTimer(mrid);
  }

  private async loadDevice(mrid: string): Promise<void> {
    try {
      const sheet = await this.api.datasheet(mrid);
      this.dispatch({ type: "datasheet-loaded", sheet });
      await this.refreshLiveData(mrid);
    } catch (err) {
      if (err instanceof UnknownDeviceError) {
        this.dispatch({ type: "datasheet-missing", mrid });
      } else {
        this.dispatch({ type: "config-failed", error: String(err) });
      }
    }
  }

  async refreshLiveData(mrid: string): Promise<void> {
    try {
      const data = await this.api.liveData(mrid);
      this.dispatch({ type: "live-data", data });
    } catch (err) {
      if (err instanceof UnknownDeviceError) {
        this.dispatch({ type: "datasheet-missing", mrid });
      }
      // transient fetch errors keep the previous values on screen
    }
  }

  private startRefreshTimer(mrid: string): void {
    this.stopRefreshTimer();
    this.refreshTimer = setInterval(() => void this.refreshLiveData(mrid), this.refreshMs);
  }

  private stopRefreshTimer(): void {
    if (this.refreshTimer !== null) {
      clearInterval(this.refreshTimer);
      this.refreshTimer = null;
    }
  }

  async sendSetpoint(mrid: string, attribute: string, value: string): Promise<void> {
    const pending = { mrid, attribute, value };
    this.dispatch({ type: "setpoint-sent", pending });
    try {
      const ack = await this.api.setpoint(mrid, attribute, value);
      this.dispatch({ type: "setpoint-done", ack, value });
    } catch (err) {
      this.dispatch({ type: "setpoint-rejected", pending, detail: String(err) });
    }
    // read-back: the stored value only changes once the sync loop has
    // observed the source, so poll right away and again shortly after
    await this.refreshLiveData(mrid);
  }
}
