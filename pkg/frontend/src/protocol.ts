/**
 * Wire protocol shared with the control service: JSON text frames of the
 * form {"kind": ..., "seq": ..., "payload": {...}} over a persistent
 * bidirectional channel.
 */

export type Kind =
  | "Hello"
  | "StateUpdate"
  | "UserInput"
  | "GateEvent"
  | "TrialComplete"
  | "FinetuneRequest"
  | "FinetuneProgress"
  | "MetricsSummary"
  | "Error";

export interface WireMessage {
  kind: Kind;
  seq: number;
  payload: Record<string, unknown>;
}

export interface BoxJson {
  lo: [number, number, number];
  hi: [number, number, number];
}

export interface StateUpdate {
  ee: number[]; // x, y, z, roll, pitch, yaw
  gripper: boolean;
  objects: number[][];
  grasped: number | null;
  obstacles: BoxJson[];
  trial: number;
  tick: number;
  done: boolean;
  trial_done: boolean;
  subtask: number;
}

export interface GateEvent {
  outcome:
    | "execute_final"
    | "pause"
    | "execute_user"
    | "execute_final_no_input"
    | "execute_rotation_bypass";
  cosine: number | null;
  source: "policy" | "user";
}

export interface HelloPayload {
  session_id: string;
  task: { name: string; workspace: BoxJson };
  trial: number;
  n_trials: number;
  tick_hz: number;
  lockstep: boolean;
}

export interface TrialCompletePayload {
  trial: number;
  metrics: {
    completion_steps: number;
    override_count: number;
    pause_count: number;
    collision_count: number;
    success: boolean;
  };
}

export interface UserInputPayload {
  translation: [number, number, number];
  rotation: [number, number, number] | null;
  gripper_toggle: boolean;
}

export function parseMessage(text: string): WireMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const m = doc as Record<string, unknown>;
  if (typeof m.kind !== "string" || typeof m.seq !== "number") return null;
  const payload =
    typeof m.payload === "object" && m.payload !== null
      ? (m.payload as Record<string, unknown>)
      : {};
  return { kind: m.kind as Kind, seq: m.seq, payload };
}

export function encodeMessage(kind: Kind, seq: number, payload: object): string {
  return JSON.stringify({ kind, seq, payload });
}
