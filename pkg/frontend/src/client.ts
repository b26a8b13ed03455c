// WebSocket client session: hello handshake, role handling, input gating.
// The socket is injected so tests (and node) can supply their own
// implementation; only the browser-style onopen/onmessage surface is used.

import {
  ControlMsg, ErrorMsg, EpisodeResult, HelloAck, PROTOCOL_VERSION, Role,
  SceneInfo, StateFrame, TeleopInput, parseServerMessage,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
}

export interface SessionEvents {
  onFrame?: (frame: StateFrame) => void;
  onResult?: (result: EpisodeResult) => void;
  onError?: (err: ErrorMsg) => void;
  onBanner?: (text: string) => void;
  onReady?: (role: Role, scene: SceneInfo) => void;
}

export class ClientSession {
  role: Role | null = null;
  scene: SceneInfo | null = null;
  running = false;
  lastAckedSeq = 0;
  banner: string | null = null;
  private outSeq = 0;
  private closed = false;

  constructor(
    private socket: SocketLike,
    private wantedRole: Role,
    private events: SessionEvents = {},
  ) {
    socket.onopen = () => {
      socket.send(JSON.stringify({
        kind: "hello", protocol_version: PROTOCOL_VERSION, role: wantedRole,
      }));
    };
    socket.onmessage = (ev) => this.handle(String(ev.data));
    socket.onclose = () => { this.closed = true; };
  }

  private handle(raw: string) {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      console.warn("malformed or unknown message skipped:", raw.slice(0, 120));
      return;
    }
    switch (msg.kind) {
      case "hello":
        if (msg.protocol_version !== PROTOCOL_VERSION) {
          this.banner = `protocol mismatch: server ${msg.protocol_version}, client ${PROTOCOL_VERSION}`;
          this.events.onBanner?.(this.banner);
          this.socket.close();
          return;
        }
        this.role = msg.role;
        this.scene = msg.scene;
        this.events.onReady?.(msg.role, msg.scene);
        return;
      case "state_frame":
        this.lastAckedSeq = Math.max(this.lastAckedSeq, msg.input_seq ?? 0);
        this.events.onFrame?.(msg);
        return;
      case "episode_result":
        this.events.onResult?.(msg);
        return;
      case "error":
        if (msg.code === "version_mismatch") {
          this.banner = msg.msg;
          this.events.onBanner?.(this.banner);
        }
        this.events.onError?.(msg);
        return;
    }
  }

  /** Driver-only, running-only; returns the sent message or null. */
  sendInput(cursor: [number, number], grip: number, tMs: number): TeleopInput | null {
    if (this.closed || this.role !== "driver" || !this.running) return null;
    const msg: TeleopInput = {
      kind: "teleop_input", seq: ++this.outSeq, t_ms: tMs, cursor, grip,
    };
    this.socket.send(JSON.stringify(msg));
    return msg;
  }

  sendControl(op: ControlMsg["op"], value?: unknown): void {
    if (this.closed) return;
    if (op === "start") this.running = true;
    if (op === "pause") this.running = false;
    const msg: ControlMsg = value === undefined ? { kind: "control", op }
      : { kind: "control", op, value };
    this.socket.send(JSON.stringify(msg));
  }

  close() {
    this.closed = true;
    this.socket.close();
  }
}
