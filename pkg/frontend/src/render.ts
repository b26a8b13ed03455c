// Canvas 2D scene: hand links (forward kinematics from q and the served
// scene geometry), object marker, point-cloud overlay, and the HUD.
// Rendering interpolates between the two latest frames, never
// extrapolates. A minimal 2D-context interface keeps tests canvas-free.

import { HudModel } from "./hud.js";
import { SceneInfo, StateFrame } from "./protocol.js";

export interface Ctx2D {
  canvas: { width: number; height: number };
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

export interface Viewport {
  scale: number;  // pixels per metre
  cx: number;     // canvas x of world origin
  cy: number;     // canvas y of world origin (y flips)
}

export function fitViewport(ctx: Ctx2D, scene: SceneInfo): Viewport {
  const xSpan = scene.palm_limits_x[1] - scene.palm_limits_x[0] + 0.4;
  const ySpan = scene.palm_limits_y[1] + 0.6;
  const scale = Math.min(ctx.canvas.width / xSpan, ctx.canvas.height / ySpan);
  return { scale, cx: ctx.canvas.width / 2, cy: ctx.canvas.height - 30 };
}

const toPx = (v: Viewport, x: number, y: number): [number, number] =>
  [v.cx + x * v.scale, v.cy - y * v.scale];

export const lerp = (a: number, b: number, t: number) => a + (b - a) * t;

/** Interpolated pose values between the previous and current frame. */
export function interpolate(prev: StateFrame | null, cur: StateFrame, t: number) {
  if (!prev) return { objP: cur.object.p, theta: cur.object.theta, q: cur.hand.q };
  const w = Math.min(1, Math.max(0, t));
  return {
    objP: [lerp(prev.object.p[0], cur.object.p[0], w),
           lerp(prev.object.p[1], cur.object.p[1], w)] as [number, number],
    theta: lerp(prev.object.theta, cur.object.theta, w),
    q: cur.hand.q.map((qi, i) => lerp(prev.hand.q[i] ?? qi, qi, w)),
  };
}

/** Finger link endpoints from joint positions, mirroring the simulator. */
export function handLinks(scene: SceneInfo, q: number[]): [number, number][][] {
  const links: [number, number][][] = [];
  const F = scene.fingers;
  const L = scene.links_per_finger;
  const palm: [number, number] = [q[0], q[1]];
  for (let f = 0; f < F; f++) {
    const bx = F === 1 ? -scene.palm_half_width
      : -scene.palm_half_width + (2 * scene.palm_half_width * f) / (F - 1);
    const sign = bx <= 0 ? 1 : -1;
    let phi = 0;
    let pos: [number, number] = [palm[0] + bx, palm[1]];
    const chain: [number, number][] = [pos];
    for (let j = 0; j < L; j++) {
      phi += q[2 + f * L + j];
      const len = scene.link_lengths[j] ?? scene.link_lengths[scene.link_lengths.length - 1];
      pos = [pos[0] + len * sign * Math.sin(phi), pos[1] + len * Math.cos(phi)];
      chain.push(pos);
    }
    links.push(chain);
  }
  return links;
}

function drawGauge(ctx: Ctx2D, hud: HudModel) {
  const x = 14, y = 16, w = 150, h = 14;
  ctx.strokeStyle = "#888";
  ctx.lineWidth = 1;
  ctx.strokeRect(x, y, w, h);
  ctx.fillStyle = "#e08030";
  ctx.fillRect(x, y, w * hud.alphaFinal, h);
  ctx.fillStyle = "#ddd";
  ctx.font = "12px monospace";
  ctx.fillText(`teleop authority ${(hud.alphaFinal * 100).toFixed(0)}% (${hud.attribution})`, x + w + 10, y + 11);
  ctx.fillText(`u=${hud.u.toFixed(2)} amax=${hud.alphaMax.toFixed(3)}`, x, y + 30);
  ctx.fillText(`mode ${hud.mode}  catches ${hud.succ}  drops ${hud.drop}  eps ${hud.episodes}`, x, y + 46);
  ctx.fillText(`t=${hud.episodeSeconds.toFixed(2)}s`, x, y + 62);
}

export function drawScene(
  ctx: Ctx2D, scene: SceneInfo, frame: StateFrame,
  prev: StateFrame | null, interp: number, hud: HudModel,
): void {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  const v = fitViewport(ctx, scene);
  const pose = interpolate(prev, frame, interp);

  // floor
  ctx.strokeStyle = "#444";
  ctx.lineWidth = 1;
  ctx.beginPath();
  const [fx0, fy] = toPx(v, scene.palm_limits_x[0] - 0.2, scene.floor_height);
  const [fx1] = toPx(v, scene.palm_limits_x[1] + 0.2, scene.floor_height);
  ctx.moveTo(fx0, fy);
  ctx.lineTo(fx1, fy);
  ctx.stroke();

  // point cloud
  ctx.fillStyle = "#3aa0ff";
  for (const [x, y] of frame.cloud) {
    const [px, py] = toPx(v, x, y);
    ctx.beginPath();
    ctx.arc(px, py, 2, 0, Math.PI * 2);
    ctx.fill();
  }

  // object marker
  ctx.strokeStyle = "#ffd24a";
  ctx.lineWidth = 2;
  const [ox, oy] = toPx(v, pose.objP[0], pose.objP[1]);
  ctx.beginPath();
  ctx.arc(ox, oy, 5, 0, Math.PI * 2);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(ox, oy);
  ctx.lineTo(ox + 10 * Math.cos(pose.theta), oy - 10 * Math.sin(pose.theta));
  ctx.stroke();

  // palm + fingers
  const palmHalfPx = scene.palm_half_width * v.scale;
  const [hx, hy] = toPx(v, pose.q[0], pose.q[1]);
  ctx.strokeStyle = "#9be89b";
  ctx.lineWidth = Math.max(2, scene.palm_radius * 2 * v.scale);
  ctx.beginPath();
  ctx.moveTo(hx - palmHalfPx, hy);
  ctx.lineTo(hx + palmHalfPx, hy);
  ctx.stroke();
  ctx.lineWidth = Math.max(2, scene.link_radius * 2 * v.scale);
  for (const chain of handLinks(scene, pose.q)) {
    ctx.beginPath();
    const [sx, sy] = toPx(v, chain[0][0], chain[0][1]);
    ctx.moveTo(sx, sy);
    for (const [x, y] of chain.slice(1)) {
      const [px, py] = toPx(v, x, y);
      ctx.lineTo(px, py);
    }
    ctx.stroke();
  }

  drawGauge(ctx, hud);
}
