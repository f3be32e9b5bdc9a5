// Wire shapes of the gateway API. The console renders these verbatim:
// all decoding and unit conversion happens server-side.

export interface PropValue {
  name: string;
  raw: number;
  value: number | null;
  error: string | null;
}

export interface LinkJson {
  dest: number;
  last_seen: number;
  props: Record<string, PropValue>;
}

export interface NodeJson {
  address: number;
  last_seen: number;
  props: Record<string, PropValue>;
  links: Record<string, LinkJson>;
}

export interface StateJson {
  t: number;
  packet_count: number;
  discard_count: number;
  nodes: Record<string, NodeJson>;
  env: Record<string, PropValue>;
}

export type Subject = { node: number } | { link: [number, number] } | "env";

export interface DiffEntry {
  subject: Subject;
  property_id: number | null; // null = the subject's last_seen timestamp
  old: number | null;
  new: number | null; // null = value/subject removed (reverse steps)
  name?: string;
  value?: number | null;
  error?: string | null;
}

export interface DiffJson {
  t: number;
  packet_count: number;
  discard_count: number;
  entries: DiffEntry[];
}

export interface PacketField {
  name: string;
  kind: string;
  property_id: number;
  raw: number;
  value: number | null;
  error: string | null;
}

export type LiveEvent =
  | { type: "packet"; t: number; packet_id: number; description: string; fields: PacketField[] }
  | { type: "diff"; diff: DiffJson }
  | { type: "discard"; t: number; reason: string; error: string }
  | { type: "checkpoint"; t: number; logs: number; nodes: number };

export type ReplayEvent =
  | { type: "diff"; session: string; diff: DiffJson }
  | { type: "full_state"; session: string; state: StateJson; cursor_t: number; clamped: boolean }
  | { type: "end"; session: string; cursor_t: number };

export interface CheckpointMeta {
  t: number;
  nodes: number;
  logs: number;
}

export interface CheckpointsJson {
  checkpoints: CheckpointMeta[];
  pending_logs: number;
  range: { from: number; to: number } | null;
}

export interface SessionJson {
  id: string;
  cursor_t: number;
  mode: string;
  speed: number;
  state: StateJson;
  clamped?: boolean;
}
