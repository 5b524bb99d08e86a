// DOM rendering.  Pure function of ClientState: wipe and rebuild the root on
// every dispatch.  At SCADA-panel scale (tens of devices) this is simpler and
// more obviously correct than incremental updates.

import type { ClientState } from "./state.js";
import { isSnapshotStale, staleDevices } from "./state.js";
import type { LiveValue } from "./types.js";

export interface RenderCallbacks {
  onOpenDevice: (mrid: string) => void;
  onBackToGrid: () => void;
  onSetpoint: (mrid: string, attribute: string, value: string) => void;
  onRefreshConfig: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) node.textContent = text;
  return node;
}

function banner(state: ClientState, callbacks: RenderCallbacks): HTMLElement {
  const bar = el("header", { class: "statusbar" });
  const connection = el("span", {
    class: `connection connection-${state.connection}`,
    "data-testid": "connection",
  });
  connection.textContent =
    state.connection === "live"
      ? "connected"
      : state.connection === "connecting"
        ? "connecting…"
        : "disconnected – retrying";
  bar.appendChild(connection);

  const generation = el(
    "span",
    { class: "generation", "data-testid": "generation" },
    state.config ? `generation ${state.config.generation}` : "no topology yet",
  );
  bar.appendChild(generation);

  if (isSnapshotStale(state)) {
    const stale = el(
      "span",
      { class: "stale-banner", "data-testid": "stale-banner" },
      `newer topology available (generation ${state.knownGeneration})`,
    );
    const refresh = el("button", { "data-testid": "refresh-config" }, "refresh");
    refresh.addEventListener("click", () => callbacks.onRefreshConfig());
    stale.appendChild(refresh);
    bar.appendChild(stale);
  }
  if (state.configError) {
    bar.appendChild(
      el("span", { class: "error", "data-testid": "config-error" }, state.configError),
    );
  }
  return bar;
}

function deviceGrid(state: ClientState, callbacks: RenderCallbacks): HTMLElement {
  const section = el("section", { class: "grid", "data-testid": "device-grid" });
  if (state.config === null) {
    // never show an empty grid that could be mistaken for "no devices"
    section.appendChild(
      el(
        "p",
        { "data-testid": state.configError ? "grid-disconnected" : "grid-loading" },
        state.configError ? "cannot reach the gateway" : "loading devices…",
      ),
    );
    return section;
  }
  if (state.config.devices.length === 0) {
    section.appendChild(el("p", { "data-testid": "grid-empty" }, "no devices in the topology"));
    return section;
  }
  const stale = staleDevices(state);
  for (const device of state.config.devices) {
    const button = el("button", {
      class: "device-button",
      "data-testid": "device-button",
      "data-mrid": device.mrid,
    });
    button.appendChild(el("span", { class: "device-name" }, device.name));
    button.appendChild(el("span", { class: "device-class" }, device.class));
    if (stale.has(device.mrid)) {
      button.appendChild(el("span", { class: "badge badge-stale", "data-testid": "stale-badge" }, "Stale"));
    }
    button.addEventListener("click", () => callbacks.onOpenDevice(device.mrid));
    section.appendChild(button);
  }
  return section;
}

function qualityBadge(value: LiveValue): HTMLElement {
  return el(
    "span",
    { class: `badge badge-${value.quality.toLowerCase()}`, "data-testid": "quality-badge" },
    value.quality,
  );
}

function datasheet(state: ClientState, mrid: string, callbacks: RenderCallbacks): HTMLElement {
  const section = el("section", { class: "datasheet", "data-testid": "datasheet" });
  const back = el("button", { "data-testid": "back-to-grid" }, "← all devices");
  back.addEventListener("click", () => callbacks.onBackToGrid());
  section.appendChild(back);

  if (state.missingDevice === mrid) {
    section.appendChild(
      el(
        "p",
        { "data-testid": "unknown-device" },
        `device ${mrid} is gone from the current topology`,
      ),
    );
    return section;
  }
  const sheet = state.datasheet;
  if (sheet === null || sheet.mrid !== mrid) {
    section.appendChild(el("p", { "data-testid": "datasheet-loading" }, "loading datasheet…"));
    return section;
  }

  section.appendChild(el("h2", {}, `${sheet.class} ${sheet.mrid}`));
  const live = state.liveData[mrid]?.values ?? {};
  const table = el("table", { class: "values", "data-testid": "value-table" });
  const names = new Set([...Object.keys(sheet.attributes), ...Object.keys(live)]);
  for (const name of [...names].sort()) {
    const row = el("tr", { "data-testid": "value-row", "data-attribute": name });
    row.appendChild(el("td", { class: "attr-name" }, name));
    const valueCell = el("td", { class: "attr-value" });
    const liveValue = live[name];
    if (liveValue !== undefined) {
      valueCell.textContent = String(liveValue.value);
      valueCell.appendChild(qualityBadge(liveValue));
      if (liveValue.timestamp) {
        valueCell.appendChild(el("span", { class: "timestamp" }, liveValue.timestamp));
      }
    } else {
      valueCell.textContent = sheet.attributes[name] ?? "";
    }
    row.appendChild(valueCell);
    table.appendChild(row);
  }
  section.appendChild(table);

  if (sheet.references.length > 0 || sheet.referenced_by.length > 0) {
    const refs = el("ul", { class: "references" });
    for (const ref of sheet.references) {
      const item = el("li", {}, `${ref.role} → `);
      const link = el("a", { href: "#", "data-testid": "ref-link" }, ref.target);
      link.addEventListener("click", (ev) => {
        ev.preventDefault();
        callbacks.onOpenDevice(ref.target);
      });
      item.appendChild(link);
      refs.appendChild(item);
    }
    for (const ref of sheet.referenced_by) {
      const item = el("li", {}, `${ref.role} ← `);
      const link = el("a", { href: "#", "data-testid": "ref-link" }, ref.source);
      link.addEventListener("click", (ev) => {
        ev.preventDefault();
        callbacks.onOpenDevice(ref.source);
      });
      item.appendChild(link);
      refs.appendChild(item);
    }
    section.appendChild(refs);
  }

  for (const attribute of sheet.writable) {
    section.appendChild(setpointForm(state, mrid, attribute, callbacks));
  }
  if (state.lastSetpoint && state.lastSetpoint.mrid === mrid) {
    const outcome = state.lastSetpoint;
    section.appendChild(
      el(
        "p",
        {
          class: outcome.accepted ? "setpoint-ok" : "setpoint-rejected",
          "data-testid": "setpoint-outcome",
        },
        outcome.accepted
          ? `setpoint ${outcome.attribute}=${outcome.value} accepted; awaiting read-back`
          : `setpoint ${outcome.attribute}=${outcome.value} rejected: ${outcome.detail}`,
      ),
    );
  }
  return section;
}

function setpointForm(
  state: ClientState,
  mrid: string,
  attribute: string,
  callbacks: RenderCallbacks,
): HTMLElement {
  const form = el("form", { class: "setpoint", "data-testid": "setpoint-form", "data-attribute": attribute });
  form.appendChild(el("label", {}, `set ${attribute}`));
  const input = el("input", { name: "value", "data-testid": "setpoint-input" });
  form.appendChild(input);
  const pending = state.pendingSetpoints.some(
    (p) => p.mrid === mrid && p.attribute === attribute,
  );
  const submit = el("button", { type: "submit", "data-testid": "setpoint-submit" });
  submit.textContent = pending ? "sending…" : "send";
  if (pending) submit.setAttribute("disabled", "disabled");
  form.appendChild(submit);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    callbacks.onSetpoint(mrid, attribute, input.value);
  });
  return form;
}

export function render(root: HTMLElement, state: ClientState, callbacks: RenderCallbacks): void {
  root.replaceChildren();
  root.appendChild(banner(state, callbacks));
  if (state.view.kind === "grid") {
    root.appendChild(deviceGrid(state, callbacks));
  } else {
    root.appendChild(datasheet(state, state.view.mrid, callbacks));
  }
}
