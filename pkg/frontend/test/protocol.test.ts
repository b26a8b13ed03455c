import { describe, expect, it } from "vitest";
import { PROTOCOL_VERSION, parseServerMessage } from "../src/protocol.js";
import { testFrame } from "./helpers.js";

describe("protocol parsing", () => {
  it("speaks protocol version 1", () => {
    expect(PROTOCOL_VERSION).toBe(1);
  });

  it("accepts a well-formed state frame", () => {
    const msg = parseServerMessage(JSON.stringify(testFrame()));
    expect(msg?.kind).toBe("state_frame");
  });

  it("rejects unknown kinds", () => {
    expect(parseServerMessage(JSON.stringify({ kind: "telemetry" }))).toBeNull();
  });

  it("rejects malformed json", () => {
    expect(parseServerMessage("{oops")).toBeNull();
  });

  it("rejects frames missing arbitration fields", () => {
    const bad: Record<string, unknown> = { ...testFrame() };
    delete bad.daim;
    expect(parseServerMessage(JSON.stringify(bad))).toBeNull();
  });

  it("accepts episode results and errors", () => {
    expect(parseServerMessage(JSON.stringify({
      kind: "episode_result", seq: 1, ts_ms: 2, success: true, dropped: false, steps: 40,
    }))?.kind).toBe("episode_result");
    expect(parseServerMessage(JSON.stringify({
      kind: "error", code: "not_driver", msg: "no",
    }))?.kind).toBe("error");
  });
});
