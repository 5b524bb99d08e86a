import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { EventStream } from "../src/events.js";
import type { GatewayEvent } from "../src/types.js";
import { FakeEventSource } from "./helpers.js";

function makeStream(since: () => number = () => 0) {
  const events: GatewayEvent[] = [];
  const statuses: string[] = [];
  const stream = new EventStream(
    (generation) => `/api/events?since=${generation}`,
    since,
    (url) => new FakeEventSource(url),
    {
      onEvent: (event) => events.push(event),
      onStatus: (status) => statuses.push(status),
    },
    { baseDelayMs: 100, maxDelayMs: 1000 },
  );
  return { stream, events, statuses };
}

beforeEach(() => {
  vi.useFakeTimers();
  FakeEventSource.reset();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("EventStream", () => {
  it("reports live after the source opens and parses events", () => {
    const { stream, events, statuses } = makeStream();
    stream.start();
    const source = FakeEventSource.latest();
    source.open();
    source.emit({ type: "reload", generation: 2 });
    expect(statuses).toEqual(["connecting", "live"]);
    expect(events).toEqual([{ type: "reload", generation: 2 }]);
    stream.stop();
  });

  it("ignores unparseable frames", () => {
    const { stream, events } = makeStream();
    stream.start();
    const source = FakeEventSource.latest();
    source.open();
    source.onmessage?.({ data: ": keepalive" });
    expect(events).toEqual([]);
    stream.stop();
  });

  it("reconnects with exponential backoff", () => {
    const { stream, statuses } = makeStream();
    stream.start();
    FakeEventSource.latest().fail();
    expect(statuses.at(-1)).toBe("disconnected");
    expect(FakeEventSource.instances).toHaveLength(1);

    vi.advanceTimersByTime(100); // first retry after base delay
    expect(FakeEventSource.instances).toHaveLength(2);

    FakeEventSource.latest().fail();
    vi.advanceTimersByTime(100); // doubled delay not yet elapsed
    expect(FakeEventSource.instances).toHaveLength(2);
    vi.advanceTimersByTime(100);
    expect(FakeEventSource.instances).toHaveLength(3);

    FakeEventSource.latest().fail();
    vi.advanceTimersByTime(399);
    expect(FakeEventSource.instances).toHaveLength(3);
    vi.advanceTimersByTime(1);
    expect(FakeEventSource.instances).toHaveLength(4);
    stream.stop();
  });

  it("caps the backoff delay", () => {
    const { stream } = makeStream();
    expect(stream.delayFor(0)).toBe(100);
    expect(stream.delayFor(3)).toBe(800);
    expect(stream.delayFor(10)).toBe(1000);
  });

  it("resets the backoff after a successful connect", () => {
    const { stream } = makeStream();
    stream.start();
    FakeEventSource.latest().fail();
    vi.advanceTimersByTime(100);
    FakeEventSource.latest().open(); // success resets attempt counter
    FakeEventSource.latest().fail();
    vi.advanceTimersByTime(100); // base delay again, not doubled
    expect(FakeEventSource.instances).toHaveLength(3);
    stream.stop();
  });

  it("resumes from the caller's generation on reconnect", () => {
    let generation = 0;
    const { stream } = makeStream(() => generation);
    stream.start();
    expect(FakeEventSource.latest().url).toBe("/api/events?since=0");
    generation = 5;
    FakeEventSource.latest().fail();
    vi.advanceTimersByTime(100);
    expect(FakeEventSource.latest().url).toBe("/api/events?since=5");
    stream.stop();
  });

  it("stop closes the source and cancels reconnects", () => {
    const { stream } = makeStream();
    stream.start();
    const source = FakeEventSource.latest();
    stream.stop();
    expect(source.closed).toBe(true);
    vi.advanceTimersByTime(10_000);
    expect(FakeEventSource.instances).toHaveLength(1);
  });
});
