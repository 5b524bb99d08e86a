// Shared fakes: a scriptable gateway (fetch) and a hand-driven EventSource.

import type { EventSourceLike } from "../src/events.js";
import type { Datasheet, LiveData, UiConfig } from "../src/types.js";

export class FakeEventSource implements EventSourceLike {
  static instances: FakeEventSource[] = [];
  static latest(): FakeEventSource {
    const source = FakeEventSource.instances.at(-1);
    if (!source) throw new Error("no EventSource created yet");
    return source;
  }
  static reset(): void {
    FakeEventSource.instances = [];
  }

  onopen: ((ev: any) => void) | null = null;
  onmessage: ((ev: any) => void) | null = null;
  onerror: ((ev: any) => void) | null = null;
  closed = false;

  constructor(public readonly url: string) {
    FakeEventSource.instances.push(this);
  }

  open(): void {
    this.onopen?.({});
  }

  emit(event: Record<string, unknown>): void {
    this.onmessage?.({ data: JSON.stringify(event) });
  }

  fail(): void {
    this.onerror?.({});
  }

  close(): void {
    this.closed = true;
  }
}

export interface FakeGateway {
  fetch: (url: string, init?: RequestInit) => Promise<Response>;
  state: {
    generation: number;
    config: UiConfig;
    datasheets: Record<string, Datasheet>;
    liveData: Record<string, LiveData>;
    reachable: boolean;
    setpointResponse: { status: number; body: Record<string, unknown> } | null;
    requests: string[];
  };
}

function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  } as unknown as Response;
}

export function device(mrid: string, cls = "Breaker", name?: string) {
  return { mrid, class: cls, name: name ?? mrid, datasheet: `/api/devices/${mrid}` };
}

export function makeFakeGateway(): FakeGateway {
  const state: FakeGateway["state"] = {
    generation: 1,
    config: { generation: 1, devices: [device("BRK-001", "Breaker", "Main breaker"), device("LOAD-001", "EnergyConsumer"), device("TRM-001", "Terminal")] },
    datasheets: {
      "BRK-001": {
        mrid: "BRK-001",
        class: "Breaker",
        attributes: { name: "Main breaker", normalOpen: "false", ratedCurrent: "630" },
        references: [],
        referenced_by: [{ role: "ConductingEquipment", source: "TRM-001" }],
        writable: ["normalOpen"],
        generation: 1,
      },
    },
    liveData: {
      "BRK-001": {
        mrid: "BRK-001",
        generation: 1,
        values: {
          normalOpen: { value: 0, timestamp: "2020-01-01T00:00:00Z", quality: "Good" },
        },
      },
    },
    reachable: true,
    setpointResponse: null,
    requests: [],
  };

  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    state.requests.push(`${init?.method ?? "GET"} ${url}`);
    if (!state.reachable) {
      throw new TypeError("fetch failed");
    }
    if (url.endsWith("/api/ui-config")) {
      return jsonResponse(200, state.config);
    }
    const dataMatch = url.match(/\/api\/devices\/([^/]+)\/data$/);
    if (dataMatch) {
      const body = state.liveData[decodeURIComponent(dataMatch[1])];
      return body
        ? jsonResponse(200, body)
        : jsonResponse(404, { error: "UnknownMrid" });
    }
    const setpointMatch = url.match(/\/api\/devices\/([^/]+)\/setpoint$/);
    if (setpointMatch && init?.method === "POST") {
      const response = state.setpointResponse ?? {
        status: 200,
        body: {
          accepted: true,
          mrid: decodeURIComponent(setpointMatch[1]),
          attribute: JSON.parse(String(init.body)).attribute,
          note: "confirmed on next poll",
        },
      };
      return jsonResponse(response.status, response.body);
    }
    const sheetMatch = url.match(/\/api\/devices\/([^/]+)$/);
    if (sheetMatch) {
      const body = state.datasheets[decodeURIComponent(sheetMatch[1])];
      return body
        ? jsonResponse(200, body)
        : jsonResponse(404, { error: "UnknownMrid" });
    }
    if (url.includes("/api/generation")) {
      return jsonResponse(200, { generation: state.generation, library_version: "lib-a-1" });
    }
    return jsonResponse(404, { error: "not found" });
  };

  return { fetch: fetchImpl, state };
}

export function flush(): Promise<void> {
  // drain the microtask queue so awaited dispatches have rendered
  return new Promise((resolve) => setTimeout(resolve, 0));
}
