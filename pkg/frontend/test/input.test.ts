import { describe, expect, it } from "vitest";
import { InputMapper } from "../src/input.js";

const rect = { left: 0, top: 0, width: 800, height: 600 };

describe("input mapping", () => {
  it("center of canvas is the neutral cursor", () => {
    const m = new InputMapper();
    const [x, y] = m.pointer(400, 300, rect);
    expect(x).toBeCloseTo(0, 12);
    expect(y).toBeCloseTo(0, 12);
  });

  it("corners saturate at +/-1", () => {
    const m = new InputMapper();
    expect(m.pointer(800, 0, rect)).toEqual([1, 1]);
    expect(m.pointer(0, 600, rect)).toEqual([-1, -1]);
    expect(m.pointer(-50, 900, rect)).toEqual([-1, -1]);
  });

  it("canvas y is flipped into world y", () => {
    const m = new InputMapper();
    const [, up] = m.pointer(400, 0, rect);
    expect(up).toBe(1);
  });

  it("grip key and slider clamp to [0, 1]", () => {
    const m = new InputMapper();
    expect(m.gripKey(true)).toBe(1);
    expect(m.gripKey(false)).toBe(0);
    expect(m.gripSlider(1.7)).toBe(1);
    expect(m.gripSlider(-0.2)).toBe(0);
  });

  it("throttles to at most one emission per interval", () => {
    const m = new InputMapper(1000 / 60);
    let sent = 0;
    for (let now = 0; now < 1000; now += 4) {
      if (m.tick(now)) sent += 1;
    }
    expect(sent).toBeLessThanOrEqual(61);
    expect(sent).toBeGreaterThanOrEqual(50);
  });

  it("replayed event fixture produces a byte-identical stream", () => {
    const fixture: Array<["move", number, number] | ["grip", number] | ["tick", number]> = [
      ["move", 100, 100], ["tick", 0], ["move", 500, 250], ["grip", 0.8],
      ["tick", 20], ["tick", 25], ["move", 640, 480], ["tick", 40],
    ];

    const run = () => {
      const m = new InputMapper(1000 / 60);
      const out: string[] = [];
      let seq = 0;
      for (const ev of fixture) {
        if (ev[0] === "move") m.pointer(ev[1], ev[2], rect);
        else if (ev[0] === "grip") m.gripSlider(ev[1]);
        else {
          const tick = m.tick(ev[1]);
          if (tick) {
            out.push(JSON.stringify({
              kind: "teleop_input", seq: ++seq, t_ms: ev[1],
              cursor: tick.cursor, grip: tick.grip,
            }));
          }
        }
      }
      return out.join("\n");
    };

    const a = run();
    expect(a.length).toBeGreaterThan(0);
    expect(run()).toBe(a);
  });
});
