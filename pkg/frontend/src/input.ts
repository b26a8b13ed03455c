// Pointer/keyboard capture: canvas coordinates map to the normalized
// cursor channels (palm target), a grip axis comes from key-hold or a
// slider. Emission is throttled to at most one message per tick interval
// and sequence numbers are handled by the session.

export interface CanvasRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

export class InputMapper {
  cursor: [number, number] = [0, 0];
  grip = 0.5;
  private lastEmit = -Infinity;

  constructor(public minIntervalMs: number = 1000 / 60) {}

  /** Canvas pixel position -> normalized [-1, 1]^2; canvas y points down. */
  pointer(px: number, py: number, rect: CanvasRect): [number, number] {
    const x = ((px - rect.left) / rect.width) * 2 - 1;
    const y = 1 - ((py - rect.top) / rect.height) * 2;
    this.cursor = [clamp(x, -1, 1), clamp(y, -1, 1)];
    return this.cursor;
  }

  /** Hold-to-close key: down -> closing toward 1, up -> opening toward 0. */
  gripKey(down: boolean) {
    this.grip = down ? 1.0 : 0.0;
    return this.grip;
  }

  gripSlider(value: number) {
    this.grip = clamp(value, 0, 1);
    return this.grip;
  }

  /** Returns {cursor, grip} when the throttle window has elapsed, else null. */
  tick(nowMs: number): { cursor: [number, number]; grip: number } | null {
    if (nowMs - this.lastEmit < this.minIntervalMs) return null;
    this.lastEmit = nowMs;
    return { cursor: [this.cursor[0], this.cursor[1]], grip: this.grip };
  }
}
