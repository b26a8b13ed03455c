import { describe, expect, it } from "vitest";
import { hudFromFrame } from "../src/hud.js";
import { testFrame, testScene } from "./helpers.js";

describe("hud model", () => {
  it("gauge equals served alpha_final exactly", () => {
    const frame = testFrame({ daim: { u: 1, alpha_max: 0.5, alpha_final: 0.37 } });
    expect(hudFromFrame(frame, testScene.dt).alphaFinal).toBe(0.37);
  });

  it("gauge empty means policy attribution, full means human", () => {
    const zero = hudFromFrame(
      testFrame({ daim: { u: 20, alpha_max: 0, alpha_final: 0 } }), testScene.dt);
    expect(zero.alphaFinal).toBe(0);
    expect(zero.attribution).toBe("policy");
    const one = hudFromFrame(
      testFrame({ daim: { u: 0, alpha_max: 1, alpha_final: 1 } }), testScene.dt);
    expect(one.alphaFinal).toBe(1);
    expect(one.attribution).toBe("human");
  });

  it("clamps out-of-range gauge values", () => {
    const hud = hudFromFrame(
      testFrame({ daim: { u: 0, alpha_max: 1.4, alpha_final: -0.2 } }), testScene.dt);
    expect(hud.alphaFinal).toBe(0);
    expect(hud.alphaMax).toBe(1);
  });

  it("mirrors tallies and mode from the frame", () => {
    const hud = hudFromFrame(testFrame(), testScene.dt);
    expect(hud.succ).toBe(3);
    expect(hud.drop).toBe(1);
    expect(hud.episodes).toBe(4);
    expect(hud.mode).toBe("tele-catch");
    expect(hud.episodeSeconds).toBeCloseTo(6 / 60, 12);
  });
});
