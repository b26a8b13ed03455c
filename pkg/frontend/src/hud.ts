// HUD view model: a pure projection of the latest state frame. Nothing
// here is invented client-side; the gauge mirrors the served arbitration
// values exactly (clamped only into the displayable [0, 1] range).

import { StateFrame } from "./protocol.js";

export interface HudModel {
  alphaFinal: number; // gauge fill, [0, 1]
  u: number;
  alphaMax: number;
  mode: string;
  attribution: "human" | "policy" | "shared";
  succ: number;
  drop: number;
  episodes: number;
  episodeSeconds: number;
}

const clamp01 = (v: number) => Math.min(1, Math.max(0, v));

export function hudFromFrame(frame: StateFrame, dt: number): HudModel {
  const alphaFinal = clamp01(frame.daim.alpha_final);
  return {
    alphaFinal,
    u: frame.daim.u,
    alphaMax: clamp01(frame.daim.alpha_max),
    mode: frame.mode,
    attribution: alphaFinal <= 0.02 ? "policy" : alphaFinal >= 0.98 ? "human" : "shared",
    succ: frame.tallies.succ,
    drop: frame.tallies.drop,
    episodes: frame.tallies.episodes,
    episodeSeconds: frame.t * dt,
  };
}
