// Thin fetch wrappers over the gateway API.  The client keeps no state of
// its own: everything rederives from these endpoints, so reconnecting is a
// pure refetch.

import type { Datasheet, LiveData, SetpointAck, UiConfig } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
    public readonly body?: unknown,
  ) {
    super(message);
  }
}

export class UnknownDeviceError extends ApiError {}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class GatewayApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
    private token: string | null = null,
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  eventsUrl(since: number): string {
    return `${this.baseUrl}/api/events?since=${since}`;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(`gateway unreachable: ${String(err)}`, 0);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON error bodies stay null
    }
    if (response.status === 404) {
      throw new UnknownDeviceError(`not found: ${path}`, 404, body);
    }
    if (!response.ok) {
      const detail =
        body && typeof body === "object" && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : `HTTP ${response.status}`;
      throw new ApiError(detail, response.status, body);
    }
    return body as T;
  }

  generation(): Promise<{ generation: number; library_version: string }> {
    return this.request("/api/generation");
  }

  uiConfig(): Promise<UiConfig> {
    return this.request("/api/ui-config");
  }

  datasheet(mrid: string): Promise<Datasheet> {
    return this.request(`/api/devices/${encodeURIComponent(mrid)}`);
  }

  liveData(mrid: string): Promise<LiveData> {
    return this.request(`/api/devices/${encodeURIComponent(mrid)}/data`);
  }

  setpoint(mrid: string, attribute: string, value: string): Promise<SetpointAck> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    return this.request(`/api/devices/${encodeURIComponent(mrid)}/setpoint`, {
      method: "POST",
      headers,
      body: JSON.stringify({ attribute, value }),
    });
  }
}
