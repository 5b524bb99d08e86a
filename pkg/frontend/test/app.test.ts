// Controller + render integration against a scripted gateway: the grid
// follows reload events without a page reload, datasheets show quality
// badges and setpoint outcomes, and stream loss is visible, never silent.

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { GatewayApi } from "../src/api.js";
import { App } from "../src/app.js";
import { FakeEventSource, device, flush, makeFakeGateway } from "./helpers.js";

let root: HTMLElement;
let gateway: ReturnType<typeof makeFakeGateway>;
let app: App;

function buttons(): string[] {
  return [...root.querySelectorAll('[data-testid="device-button"]')].map(
    (b) => (b as HTMLElement).dataset.mrid ?? "",
  );
}

function testid(id: string): HTMLElement | null {
  return root.querySelector(`[data-testid="${id}"]`);
}

beforeEach(async () => {
  FakeEventSource.reset();
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
  gateway = makeFakeGateway();
  const api = new GatewayApi("", gateway.fetch, "ui-token");
  app = new App(api, (url) => new FakeEventSource(url), root, { refreshMs: 50_000 });
  await app.start();
  FakeEventSource.latest().open();
  await flush();
});

afterEach(() => {
  app.stop();
});

describe("device grid", () => {
  it("renders one button per device", () => {
    expect(buttons()).toEqual(["BRK-001", "LOAD-001", "TRM-001"]);
    expect(testid("connection")?.textContent).toBe("connected");
  });

  it("grows 3 -> 4 on a reload event without a page reload", async () => {
    gateway.state.config = {
      generation: 2,
      devices: [...gateway.state.config.devices, device("BRK-002", "Breaker", "Tie breaker")],
    };
    FakeEventSource.latest().emit({ type: "reload", generation: 2 });
    await flush();
    expect(buttons()).toEqual(["BRK-001", "LOAD-001", "TRM-001", "BRK-002"]);
    expect(testid("generation")?.textContent).toBe("generation 2");
    // same document, same root: nothing navigated
    expect(document.getElementById("app")).toBe(root);
  });

  it("shows an explicit empty state for an empty topology", async () => {
    gateway.state.config = { generation: 2, devices: [] };
    FakeEventSource.latest().emit({ type: "reload", generation: 2 });
    await flush();
    expect(testid("grid-empty")).not.toBeNull();
    expect(buttons()).toEqual([]);
  });

  it("distinguishes gateway-unreachable from no-devices", async () => {
    FakeEventSource.reset();
    document.body.innerHTML = '<div id="app"></div>';
    const failedRoot = document.getElementById("app")!;
    const downGateway = makeFakeGateway();
    downGateway.state.reachable = false;
    const failedApp = new App(
      new GatewayApi("", downGateway.fetch),
      (url) => new FakeEventSource(url),
      failedRoot,
    );
    await failedApp.start();
    await flush();
    expect(failedRoot.querySelector('[data-testid="grid-disconnected"]')).not.toBeNull();
    expect(failedRoot.querySelector('[data-testid="grid-empty"]')).toBeNull();
    failedApp.stop();
  });

  it("badges a device on a staleness event", async () => {
    FakeEventSource.latest().emit({
      type: "staleness",
      generation: 1,
      mrid: "BRK-001",
      attribute: "normalOpen",
      quality: "Stale",
    });
    await flush();
    expect(testid("stale-badge")).not.toBeNull();
  });
});

describe("datasheet view", () => {
  it("shows live values with quality badges", async () => {
    app.openDevice("BRK-001");
    await flush();
    const sheet = testid("datasheet");
    expect(sheet).not.toBeNull();
    const row = root.querySelector('[data-attribute="normalOpen"]');
    expect(row?.textContent).toContain("0");
    expect(row?.querySelector('[data-testid="quality-badge"]')?.textContent).toBe("Good");
  });

  it("submits a setpoint and shows the accepted outcome plus read-back", async () => {
    app.openDevice("BRK-001");
    await flush();
    // accepted write: the next data poll reads back the new value
    gateway.state.liveData["BRK-001"] = {
      mrid: "BRK-001",
      generation: 1,
      values: { normalOpen: { value: 1, timestamp: "2020-01-01T00:00:10Z", quality: "Good" } },
    };
    await app.sendSetpoint("BRK-001", "normalOpen", "true");
    await flush();
    expect(testid("setpoint-outcome")?.textContent).toContain("accepted");
    const row = root.querySelector('[data-attribute="normalOpen"]');
    expect(row?.textContent).toContain("1");
    expect(
      gateway.state.requests.some((r) => r.startsWith("POST") && r.includes("/setpoint")),
    ).toBe(true);
  });

  it("shows a rejection from the gateway", async () => {
    app.openDevice("BRK-001");
    await flush();
    gateway.state.setpointResponse = {
      status: 422,
      body: { error: "TypeMismatch", detail: "Boolean expected" },
    };
    await app.sendSetpoint("BRK-001", "normalOpen", "7");
    await flush();
    expect(testid("setpoint-outcome")?.textContent).toContain("rejected");
    expect(testid("setpoint-outcome")?.textContent).toContain("Boolean expected");
  });

  it("renders the unknown-device view when the device vanished", async () => {
    app.openDevice("GHOST-9");
    await flush();
    expect(testid("unknown-device")).not.toBeNull();
    expect(testid("back-to-grid")).not.toBeNull();
  });

  it("navigates back to the grid", async () => {
    app.openDevice("BRK-001");
    await flush();
    (testid("back-to-grid") as HTMLButtonElement).click();
    await flush();
    expect(testid("device-grid")).not.toBeNull();
  });

  it("follows a reload that removes the open device", async () => {
    app.openDevice("BRK-001");
    await flush();
    gateway.state.config = { generation: 2, devices: [device("LOAD-001", "EnergyConsumer")] };
    delete gateway.state.datasheets["BRK-001"];
    delete gateway.state.liveData["BRK-001"];
    FakeEventSource.latest().emit({ type: "reload", generation: 2 });
    await flush();
    expect(testid("unknown-device")).not.toBeNull();
  });
});

describe("resilience", () => {
  it("shows disconnected while the stream is down and converges after reconnect", async () => {
    // gateway dies: stream errors out, UI flags it
    FakeEventSource.latest().fail();
    await flush();
    expect(testid("connection")?.textContent).toContain("disconnected");

    // gateway comes back at a newer generation; reconnect replays the reload
    gateway.state.config = {
      generation: 3,
      devices: [...gateway.state.config.devices, device("BRK-002")],
    };
    await new Promise((resolve) => setTimeout(resolve, 600)); // past the base backoff
    const revived = FakeEventSource.latest();
    revived.open();
    revived.emit({ type: "reload", generation: 3 });
    await flush();
    expect(testid("connection")?.textContent).toBe("connected");
    expect(buttons()).toContain("BRK-002");
    expect(testid("generation")?.textContent).toBe("generation 3");
  });

  it("keeps the last good grid and flags the error when a refetch fails", async () => {
    gateway.state.reachable = false;
    FakeEventSource.latest().emit({ type: "reload", generation: 2 });
    await flush();
    expect(buttons()).toEqual(["BRK-001", "LOAD-001", "TRM-001"]); // stale but visible
    expect(testid("config-error")).not.toBeNull();
    expect(testid("stale-banner")).not.toBeNull(); // and marked stale
  });
});
