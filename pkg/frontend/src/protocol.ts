// Wire protocol types and validation for the catchlab session service.
// Every message is a single JSON object with a `kind` discriminator.

export const PROTOCOL_VERSION = 1;

export type Role = "driver" | "observer";

export interface SceneInfo {
  palm_half_width: number;
  palm_radius: number;
  link_lengths: number[];
  link_radius: number;
  fingers: number;
  links_per_finger: number;
  floor_height: number;
  palm_limits_x: number[];
  palm_limits_y: number[];
  dt: number;
}

export interface HelloAck {
  kind: "hello";
  protocol_version: number;
  role: Role;
  session?: string;
  scene: SceneInfo;
}

export interface StateFrame {
  kind: "state_frame";
  seq: number;
  ts_ms: number;
  t: number;
  object: { p: [number, number]; v: [number, number]; theta: number; omega: number };
  hand: { q: number[]; tips: [number, number][] };
  cloud: [number, number][];
  daim: { u: number; alpha_max: number; alpha_final: number };
  tallies: { succ: number; drop: number; episodes: number };
  mode: string;
  input_seq: number;
}

export interface EpisodeResult {
  kind: "episode_result";
  seq: number;
  ts_ms: number;
  success: boolean;
  dropped: boolean;
  steps: number;
}

export interface ErrorMsg {
  kind: "error";
  code: string;
  msg: string;
}

export type ServerMessage = HelloAck | StateFrame | EpisodeResult | ErrorMsg;

export interface TeleopInput {
  kind: "teleop_input";
  seq: number;
  t_ms: number;
  cursor: [number, number];
  grip: number;
}

export interface ControlMsg {
  kind: "control";
  op: "start" | "pause" | "reset" | "set_mode" | "set_seed";
  value?: unknown;
}

const isNum = (x: unknown): x is number => typeof x === "number" && Number.isFinite(x);
const isPair = (x: unknown): x is [number, number] =>
  Array.isArray(x) && x.length === 2 && isNum(x[0]) && isNum(x[1]);

export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: any;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (!msg || typeof msg !== "object") return null;
  switch (msg.kind) {
    case "hello":
      if (isNum(msg.protocol_version) && (msg.role === "driver" || msg.role === "observer"))
        return msg as HelloAck;
      return null;
    case "state_frame": {
      const ok =
        isNum(msg.seq) && isNum(msg.t) &&
        msg.object && isPair(msg.object.p) && isPair(msg.object.v) &&
        isNum(msg.object.theta) && isNum(msg.object.omega) &&
        msg.hand && Array.isArray(msg.hand.q) && Array.isArray(msg.hand.tips) &&
        Array.isArray(msg.cloud) &&
        msg.daim && isNum(msg.daim.u) && isNum(msg.daim.alpha_max) && isNum(msg.daim.alpha_final) &&
        msg.tallies && isNum(msg.tallies.succ) && isNum(msg.tallies.drop) && isNum(msg.tallies.episodes) &&
        typeof msg.mode === "string";
      return ok ? (msg as StateFrame) : null;
    }
    case "episode_result":
      if (typeof msg.success === "boolean" && typeof msg.dropped === "boolean" && isNum(msg.steps))
        return msg as EpisodeResult;
      return null;
    case "error":
      if (typeof msg.code === "string") return msg as ErrorMsg;
      return null;
    default:
      return null; // unknown kinds are rejected
  }
}
