// Browser entry point: create a session over HTTP, open the stream,
// capture pointer/keyboard teleoperation, render at animation-frame rate
// with interpolation between the two latest server frames.

import { ClientSession } from "./client.js";
import { hudFromFrame } from "./hud.js";
import { InputMapper } from "./input.js";
import { EpisodeResult, Role, StateFrame } from "./protocol.js";
import { Ctx2D, drawScene } from "./render.js";

async function boot() {
  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d") as unknown as Ctx2D;
  const banner = document.getElementById("banner") as HTMLElement;
  const toast = document.getElementById("toast") as HTMLElement;
  const modeSelect = document.getElementById("mode") as HTMLSelectElement;
  const roleWanted =
    new URLSearchParams(location.search).get("role") === "observer"
      ? "observer" : "driver";

  const base = location.origin.replace(/^http/, "ws");
  const created = await fetch("/sessions", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ mode: modeSelect.value }),
  }).then((r) => r.json());

  const socket = new WebSocket(`${base}/sessions/${created.id}/stream`);
  const input = new InputMapper();
  let frame: StateFrame | null = null;
  let prev: StateFrame | null = null;
  let frameAt = 0;
  let frameGap = 50;

  const session = new ClientSession(socket as never, roleWanted as Role, {
    onReady(role) {
      banner.textContent = `connected as ${role}`;
      if (role === "observer") {
        document.querySelectorAll("button.driver").forEach(
          (b) => ((b as HTMLButtonElement).disabled = true));
      }
    },
    onBanner(text) {
      banner.textContent = text;
      banner.classList.add("error");
    },
    onFrame(f) {
      prev = frame;
      const now = performance.now();
      if (frameAt > 0) frameGap = Math.max(10, now - frameAt);
      frameAt = now;
      frame = f;
    },
    onResult(r: EpisodeResult) {
      toast.textContent = r.success ? `caught in ${r.steps} steps`
        : r.dropped ? "dropped" : "timeout";
      toast.className = r.success ? "ok" : "bad";
      setTimeout(() => (toast.textContent = ""), 1500);
    },
    onError(e) {
      if (e.code !== "not_driver") console.warn("server error:", e);
    },
  });

  canvas.addEventListener("pointermove", (ev) => {
    input.pointer(ev.clientX, ev.clientY, canvas.getBoundingClientRect());
  });
  window.addEventListener("keydown", (ev) => {
    if (ev.code === "Space") input.gripKey(true);
  });
  window.addEventListener("keyup", (ev) => {
    if (ev.code === "Space") input.gripKey(false);
  });
  (document.getElementById("grip") as HTMLInputElement).addEventListener(
    "input", (ev) => input.gripSlider(Number((ev.target as HTMLInputElement).value)));

  for (const op of ["start", "pause", "reset"] as const) {
    document.getElementById(op)!.addEventListener("click", () => session.sendControl(op));
  }
  modeSelect.addEventListener("change", () =>
    session.sendControl("set_mode", modeSelect.value));

  function loop(now: number) {
    const tick = input.tick(now);
    if (tick) session.sendInput(tick.cursor, tick.grip, now);
    if (frame && session.scene) {
      const interp = Math.min(1, (performance.now() - frameAt) / frameGap);
      drawScene(ctx, session.scene, frame, prev, interp,
                hudFromFrame(frame, session.scene.dt));
    }
    requestAnimationFrame(loop);
  }
  requestAnimationFrame(loop);
}

boot();
