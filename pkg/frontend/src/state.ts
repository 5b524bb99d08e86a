// Client state and its reducer.  Every transition flows through reduce();
// the render layer only ever sees a finished state, so the rendered device
// set always equals the latest fetched ui-config snapshot (never a partial
// or speculative one).

import type {
  ConnectionStatus,
  Datasheet,
  GatewayEvent,
  LiveData,
  SetpointAck,
  UiConfig,
} from "./types.js";

export type View = { kind: "grid" } | { kind: "datasheet"; mrid: string };

export interface PendingSetpoint {
  mrid: string;
  attribute: string;
  value: string;
}

export interface SetpointOutcome {
  mrid: string;
  attribute: string;
  value: string;
  accepted: boolean;
  detail: string;
}

export interface ClientState {
  config: UiConfig | null;
  configError: string | null;
  connection: ConnectionStatus;
  /** newest generation reported by the event stream or any response */
  knownGeneration: number;
  view: View;
  datasheet: Datasheet | null;
  /** mrid that 404'd after navigation (device removed under us) */
  missingDevice: string | null;
  liveData: Record<string, LiveData>;
  /** mrid -> attributes the stream flagged stale since the last data refresh */
  staleFlags: Record<string, string[]>;
  pendingSetpoints: PendingSetpoint[];
  lastSetpoint: SetpointOutcome | null;
}

export const initialState: ClientState = {
  config: null,
  configError: null,
  connection: "connecting",
  knownGeneration: 0,
  view: { kind: "grid" },
  datasheet: null,
  missingDevice: null,
  liveData: {},
  staleFlags: {},
  pendingSetpoints: [],
  lastSetpoint: null,
};

export type Action =
  | { type: "config-loaded"; config: UiConfig }
  | { type: "config-failed"; error: string }
  | { type: "connection"; status: ConnectionStatus }
  | { type: "gateway-event"; event: GatewayEvent }
  | { type: "navigate"; view: View }
  | { type: "datasheet-loaded"; sheet: Datasheet }
  | { type: "datasheet-missing"; mrid: string }
  | { type: "live-data"; data: LiveData }
  | { type: "setpoint-sent"; pending: PendingSetpoint }
  | { type: "setpoint-done"; ack: SetpointAck; value: string }
  | { type: "setpoint-rejected"; pending: PendingSetpoint; detail: string };

function withoutPending(
  list: PendingSetpoint[],
  mrid: string,
  attribute: string,
): PendingSetpoint[] {
  return list.filter((p) => !(p.mrid === mrid && p.attribute === attribute));
}

export function reduce(state: ClientState, action: Action): ClientState {
  switch (action.type) {
    case "config-loaded": {
      // a fresh snapshot clears the error state and prunes caches of
      // devices that no longer exist (no phantom devices)
      const alive = new Set(action.config.devices.map((d) => d.mrid));
      const liveData: Record<string, LiveData> = {};
      for (const [mrid, data] of Object.entries(state.liveData)) {
        if (alive.has(mrid)) liveData[mrid] = data;
      }
      const staleFlags: Record<string, string[]> = {};
      for (const [mrid, attrs] of Object.entries(state.staleFlags)) {
        if (alive.has(mrid)) staleFlags[mrid] = attrs;
      }
      return {
        ...state,
        config: action.config,
        configError: null,
        knownGeneration: Math.max(state.knownGeneration, action.config.generation),
        liveData,
        staleFlags,
      };
    }
    case "config-failed":
      // keep the last good snapshot visible; the banner carries the error
      return { ...state, configError: action.error };
    case "connection":
      return { ...state, connection: action.status };
    case "gateway-event": {
      const generation = Math.max(state.knownGeneration, action.event.generation ?? 0);
      if (action.event.type === "staleness" && action.event.mrid && action.event.attribute) {
        const current = state.staleFlags[action.event.mrid] ?? [];
        const attrs = current.includes(action.event.attribute)
          ? current
          : [...current, action.event.attribute];
        return {
          ...state,
          knownGeneration: generation,
          staleFlags: { ...state.staleFlags, [action.event.mrid]: attrs },
        };
      }
      return { ...state, knownGeneration: generation };
    }
    case "navigate":
      return {
        ...state,
        view: action.view,
        datasheet: action.view.kind === "datasheet" ? state.datasheet : null,
        missingDevice: null,
        lastSetpoint: null,
      };
    case "datasheet-loaded":
      return { ...state, datasheet: action.sheet, missingDevice: null };
    case "datasheet-missing":
      return { ...state, datasheet: null, missingDevice: action.mrid };
    case "live-data": {
      // a fresh reading supersedes any stale flags for that device
      const staleFlags = { ...state.staleFlags };
      delete staleFlags[action.data.mrid];
      return {
        ...state,
        liveData: { ...state.liveData, [action.data.mrid]: action.data },
        staleFlags,
      };
    }
    case "setpoint-sent":
      return {
        ...state,
        pendingSetpoints: [
          ...withoutPending(state.pendingSetpoints, action.pending.mrid, action.pending.attribute),
          action.pending,
        ],
        lastSetpoint: null,
      };
    case "setpoint-done":
      return {
        ...state,
        pendingSetpoints: withoutPending(
          state.pendingSetpoints,
          action.ack.mrid,
          action.ack.attribute,
        ),
        lastSetpoint: {
          mrid: action.ack.mrid,
          attribute: action.ack.attribute,
          value: action.value,
          accepted: action.ack.accepted,
          detail: action.ack.note ?? "",
        },
      };
    case "setpoint-rejected":
      return {
        ...state,
        pendingSetpoints: withoutPending(
          state.pendingSetpoints,
          action.pending.mrid,
          action.pending.attribute,
        ),
        lastSetpoint: {
          mrid: action.pending.mrid,
          attribute: action.pending.attribute,
          value: action.pending.value,
          accepted: false,
          detail: action.detail,
        },
      };
  }
}

/** The stream saw a newer generation than the rendered snapshot. */
export function isSnapshotStale(state: ClientState): boolean {
  return state.config !== null && state.knownGeneration > state.config.generation;
}

/** Device mrids currently carrying a staleness badge. */
export function staleDevices(state: ClientState): Set<string> {
  return new Set(Object.keys(state.staleFlags));
}
