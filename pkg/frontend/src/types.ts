// Wire types mirroring the gateway API payloads.

export type Quality = "Good" | "Stale" | "Bad";

export interface UiDevice {
  mrid: string;
  class: string;
  name: string;
  datasheet: string;
}

export interface UiConfig {
  generation: number;
  devices: UiDevice[];
}

export interface LiveValue {
  value: unknown;
  timestamp: string | null;
  quality: Quality;
}

export interface LiveData {
  mrid: string;
  generation: number;
  values: Record<string, LiveValue>;
}

export interface Reference {
  role: string;
  target: string;
}

export interface InboundReference {
  role: string;
  source: string;
}

export interface Datasheet {
  mrid: string;
  class: string;
  attributes: Record<string, string>;
  references: Reference[];
  referenced_by: InboundReference[];
  writable: string[];
  generation: number;
}

export interface GatewayEvent {
  type: string;
  generation: number;
  seq?: number;
  mrid?: string;
  attribute?: string;
  tag?: string;
  quality?: string;
  detail?: string;
  reload?: unknown;
}

export interface SetpointAck {
  accepted: boolean;
  mrid: string;
  attribute: string;
  tag?: string;
  note?: string;
}

export type ConnectionStatus = "connecting" | "live" | "disconnected";
