import { SceneInfo, StateFrame } from "../src/protocol.js";
import { SocketLike } from "../src/client.js";

export const testScene: SceneInfo = {
  palm_half_width: 0.09,
  palm_radius: 0.012,
  link_lengths: [0.07, 0.06],
  link_radius: 0.01,
  fingers: 2,
  links_per_finger: 2,
  floor_height: 0,
  palm_limits_x: [-0.3, 0.3],
  palm_limits_y: [0.05, 0.24],
  dt: 1 / 60,
};

export function testFrame(overrides: Partial<StateFrame> = {}): StateFrame {
  return {
    kind: "state_frame",
    seq: 1,
    ts_ms: 100,
    t: 6,
    object: { p: [0.05, 0.3], v: [0, -1.2], theta: 0.1, omega: 0.5 },
    hand: { q: [0, 0.12, 0.1, 0.1, 0.1, 0.1], tips: [[-0.05, 0.24], [0.05, 0.24]] },
    cloud: [[0.04, 0.29], [0.06, 0.31]],
    daim: { u: 2.5, alpha_max: 0.2, alpha_final: 0.2 },
    tallies: { succ: 3, drop: 1, episodes: 4 },
    mode: "tele-catch",
    input_seq: 12,
    ...overrides,
  };
}

export class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;

  send(data: string) {
    this.sent.push(data);
  }

  close() {
    this.closed = true;
    this.onclose?.();
  }

  open() {
    this.onopen?.();
  }

  receive(msg: unknown) {
    this.onmessage?.({ data: typeof msg === "string" ? msg : JSON.stringify(msg) });
  }
}

export class FakeCtx {
  canvas = { width: 800, height: 500 };
  fillStyle = "";
  strokeStyle = "";
  lineWidth = 1;
  font = "";
  ops: string[] = [];
  beginPath() { this.ops.push("beginPath"); }
  moveTo(x: number, y: number) { this.ops.push(`moveTo ${x.toFixed(1)},${y.toFixed(1)}`); }
  lineTo(x: number, y: number) { this.ops.push(`lineTo ${x.toFixed(1)},${y.toFixed(1)}`); }
  arc(x: number, y: number, r: number) { this.ops.push(`arc ${x.toFixed(1)},${y.toFixed(1)},${r}`); }
  stroke() { this.ops.push("stroke"); }
  fill() { this.ops.push("fill"); }
  fillRect(x: number, y: number, w: number, h: number) { this.ops.push(`fillRect ${x},${y},${w.toFixed(2)},${h}`); }
  strokeRect() { this.ops.push("strokeRect"); }
  clearRect() { this.ops.push("clearRect"); }
  fillText(text: string) { this.ops.push(`fillText ${text}`); }
}
