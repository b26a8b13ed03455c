"""Live session service: HTTP session management plus a WebSocket stream.

Wire protocol (JSON messages, one per WebSocket frame):

    client -> server
      hello        {kind, protocol_version: 1, role: "driver"|"observer"}
      teleop_input {kind, seq, t_ms, cursor: [x, y], grip: 0..1}
      control      {kind, op: "start"|"pause"|"reset"|"set_mode"|"set_seed",
                    value}
    server -> client
      hello        {kind, protocol_version, role (granted), scene}
      state_frame  {kind, seq, ts_ms, t, object:{p, v, theta, omega},
                    hand:{q, tips}, cloud:[[x, y]...], daim:{u, alpha_max,
                    alpha_final}, tallies:{succ, drop, episodes}, mode,
                    input_seq}
      episode_result {kind, seq, ts_ms, success, dropped, steps}
      error        {kind, code, msg}

The first client asking for the driver role gets teleop authority;
everyone else observes, and their teleop_input is rejected with an error
frame. One asyncio control loop per session steps physics at the world
rate and broadcasts every `frame_every`-th step through per-client
bounded queues (drop-oldest, so a slow client sees seq gaps, never a
stalled simulation).
"""
from __future__ import annotations

import asyncio
import itertools
import json

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from ..daim import TeleopFrame
from ..percept import sample_cloud
from .episode import MODES, Episode
from .profiles import AppConfig

PROTOCOL_VERSION = 1
CLIENT_QUEUE_SIZE = 16


class MailboxTeleop:
    """Latest-wins teleop mailbox; producers never block the control loop."""

    def __init__(self):
        self.latest = None

    def push(self, frame: TeleopFrame):
        self.latest = frame

    def frame(self, state, t):
        return self.latest


class Client:
    _ids = itertools.count(1)

    def __init__(self, ws: WebSocket, role: str):
        self.id = next(Client._ids)
        self.ws = ws
        self.role = role
        self.queue = asyncio.Queue(maxsize=CLIENT_QUEUE_SIZE)

    def offer(self, text: str):
        try:
            self.queue.put_nowait(text)
        except asyncio.QueueFull:
            try:
                self.queue.get_nowait()
            except asyncio.QueueEmpty:
                pass
            self.queue.put_nowait(text)


class Session:
    _ids = itertools.count(1)

    def __init__(self, app_cfg: AppConfig, policy, mode, seed):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.id = f"s{next(Session._ids)}"
        self.app_cfg = app_cfg
        self.policy = policy
        self.mode = mode
        self.seed = seed
        self.running = False
        self.closed = False
        self.tallies = {"succ": 0, "drop": 0, "episodes": 0}
        self.clients = {}
        self.driver_id = None
        self.mailbox = MailboxTeleop()
        self.frame_seq = 0
        self.sim_ms = 0.0
        self.episode = None
        self.episode_index = 0
        self.task = None
        self._cloud_view_rng = np.random.default_rng(seed ^ 0x5EED)
        self._start_episode()

    # -- episode plumbing -------------------------------------------------
    def _episode_seeds(self):
        ss = np.random.SeedSequence(entropy=self.seed,
                                    spawn_key=(self.episode_index,))
        return [np.random.default_rng(c) for c in ss.spawn(3)]

    def _start_episode(self):
        env_rng, infer_rng, cloud_rng = self._episode_seeds()
        self.episode = Episode(self.app_cfg.world, self.mode, env_rng,
                               policy=self.policy, daim=self.app_cfg.daim,
                               teleop=self.mailbox,
                               infer_rng=infer_rng, cloud_rng=cloud_rng)
        self.episode_index += 1

    def reset_episode(self):
        self._start_episode()

    def set_seed(self, seed):
        self.seed = int(seed)
        self.episode_index = 0
        self._start_episode()

    def set_mode(self, mode):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if mode != "tele-pure" and self.policy is None:
            raise ValueError(f"mode {mode} needs a policy checkpoint")
        self.mode = mode
        self._start_episode()

    def run_episode(self, teleop_source=None, mode=None):
        """Synchronous single episode for batch use; updates the tallies."""
        mode = mode or self.mode
        env_rng, infer_rng, cloud_rng = self._episode_seeds()
        self.episode_index += 1
        ep = Episode(self.app_cfg.world, mode, env_rng, policy=self.policy,
                     daim=self.app_cfg.daim, teleop=teleop_source,
                     infer_rng=infer_rng, cloud_rng=cloud_rng)
        result = ep.run()
        self._tally(result)
        return result

    def _tally(self, result):
        if result.invalid:
            return
        self.tallies["episodes"] += 1
        self.tallies["succ"] += int(result.success)
        self.tallies["drop"] += int(result.dropped)

    # -- wire payloads -----------------------------------------------------
    def scene_info(self):
        w = self.app_cfg.world
        return {"palm_half_width": w.palm_half_width,
                "palm_radius": w.palm_radius,
                "link_lengths": list(w.link_lengths),
                "link_radius": w.link_radius,
                "fingers": w.fingers,
                "links_per_finger": w.links_per_finger,
                "floor_height": w.floor_height,
                "palm_limits_x": list(w.palm_limits_x),
                "palm_limits_y": list(w.palm_limits_y),
                "dt": w.dt}

    def state_frame(self):
        state = self.episode.state
        obj = state.object
        self.frame_seq += 1
        n_cloud = self.app_cfg.serve.cloud_points
        cloud = sample_cloud(obj, n_cloud, self._cloud_view_rng)
        trace = self.episode.last_trace
        daim = {"u": trace.u, "alpha_max": trace.alpha_max,
                "alpha_final": trace.alphas[-1]} if trace else \
               {"u": 0.0, "alpha_max": 0.0, "alpha_final": 0.0}
        return {"kind": "state_frame", "seq": self.frame_seq,
                "ts_ms": self.sim_ms, "t": state.t,
                "object": {"p": obj.position.tolist(),
                           "v": obj.velocity.tolist(),
                           "theta": obj.theta, "omega": obj.omega},
                "hand": {"q": state.hand.q.tolist(),
                         "tips": state.hand.tips.tolist()},
                "cloud": [[float(x), float(y)] for x, y in cloud],
                "daim": daim, "tallies": dict(self.tallies),
                "mode": self.mode,
                "input_seq": self.episode.last_input_seq}

    def broadcast(self, payload: dict):
        text = json.dumps(payload)
        for client in list(self.clients.values()):
            client.offer(text)

    def summary(self):
        return {"id": self.id, "mode": self.mode, "seed": self.seed,
                "running": self.running, "tallies": dict(self.tallies),
                "clients": len(self.clients), "episode_index": self.episode_index,
                "t": self.episode.state.t if self.episode else 0}

    # -- control loop ------------------------------------------------------
    async def loop(self):
        cfg = self.app_cfg
        dt = cfg.world.dt
        step_i = 0
        while not self.closed:
            if not self.running or self.episode is None:
                await asyncio.sleep(0.02)
                continue
            _, done, result = self.episode.step()
            self.sim_ms += dt * 1000.0
            step_i += 1
            if step_i % cfg.serve.frame_every == 0:
                self.broadcast(self.state_frame())
            if done:
                self._tally(result)
                self.frame_seq += 1
                self.broadcast({"kind": "episode_result", "seq": self.frame_seq,
                                "ts_ms": self.sim_ms, **result.to_dict()})
                self._start_episode()
            await asyncio.sleep(dt)


def error_frame(code, msg):
    return {"kind": "error", "code": code, "msg": msg}


def create_app(app_cfg: AppConfig, policy=None) -> FastAPI:
    app = FastAPI(title="catchlab session service")
    sessions = {}
    app.state.sessions = sessions
    app.state.config = app_cfg
    app.state.policy = policy

    @app.get("/health")
    def health():
        return {"status": "ok", "version": PROTOCOL_VERSION,
                "sessions": len(sessions)}

    @app.post("/sessions")
    async def create_session(body: dict = None):
        body = body or {}
        mode = body.get("mode", "tele-pure")
        seed = int(body.get("seed", app_cfg.seed))
        if mode != "tele-pure" and policy is None:
            return JSONResponse({"error": f"mode {mode} needs a policy "
                                          "checkpoint loaded at serve time"},
                                status_code=400)
        try:
            session = Session(app_cfg, policy, mode, seed)
        except ValueError as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        sessions[session.id] = session
        session.task = asyncio.create_task(session.loop())
        return {"id": session.id, "mode": mode, "seed": seed}

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        session = sessions.get(sid)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        return session.summary()

    @app.delete("/sessions/{sid}")
    async def delete_session(sid: str):
        session = sessions.pop(sid, None)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        session.closed = True
        if session.task:
            session.task.cancel()
        return {"deleted": sid}

    @app.websocket("/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        session = sessions.get(sid)
        await ws.accept()
        if session is None:
            await ws.send_json(error_frame("unknown_session", sid))
            await ws.close()
            return

        try:
            hello = json.loads(await ws.receive_text())
        except (json.JSONDecodeError, WebSocketDisconnect):
            await ws.close()
            return
        if hello.get("kind") != "hello":
            await ws.send_json(error_frame("protocol", "expected hello first"))
            await ws.close()
            return
        if hello.get("protocol_version") != PROTOCOL_VERSION:
            await ws.send_json(error_frame(
                "version_mismatch",
                f"server speaks protocol {PROTOCOL_VERSION}"))
            await ws.close()
            return

        wanted = hello.get("role", "observer")
        role = "driver" if (wanted == "driver"
                            and session.driver_id is None) else "observer"
        client = Client(ws, role)
        session.clients[client.id] = client
        if role == "driver":
            session.driver_id = client.id
        await ws.send_json({"kind": "hello",
                            "protocol_version": PROTOCOL_VERSION,
                            "role": role, "session": sid,
                            "scene": session.scene_info()})

        async def sender():
            while True:
                await ws.send_text(await client.queue.get())

        send_task = asyncio.create_task(sender())
        last_seq = 0
        try:
            while True:
                msg = json.loads(await ws.receive_text())
                kind = msg.get("kind")
                if kind == "teleop_input":
                    if client.role != "driver":
                        client.offer(json.dumps(error_frame(
                            "not_driver", "observer input rejected")))
                        continue
                    seq = int(msg.get("seq", 0))
                    if seq <= last_seq:
                        continue
                    last_seq = seq
                    session.mailbox.push(TeleopFrame(
                        t_ms=session.sim_ms,
                        cursor=np.asarray(msg.get("cursor", [0.0, 0.0]),
                                          dtype=np.float64),
                        grip=float(msg.get("grip", 0.5)),
                        source="live", seq=seq))
                elif kind == "control":
                    op = msg.get("op")
                    try:
                        if op == "start":
                            session.running = True
                        elif op == "pause":
                            session.running = False
                        elif op == "reset":
                            session.reset_episode()
                        elif op == "set_mode":
                            session.set_mode(msg.get("value"))
                        elif op == "set_seed":
                            session.set_seed(msg.get("value", 0))
                        else:
                            client.offer(json.dumps(error_frame(
                                "unknown_op", str(op))))
                    except ValueError as e:
                        client.offer(json.dumps(error_frame("bad_control",
                                                            str(e))))
                else:
                    client.offer(json.dumps(error_frame("unknown_kind",
                                                        str(kind))))
        except (WebSocketDisconnect, json.JSONDecodeError):
            pass
        finally:
            send_task.cancel()
            session.clients.pop(client.id, None)
            if session.driver_id == client.id:
                session.driver_id = None

    return app
