"""Teleoperation frames, retargeting, and scripted operators.

A TeleopFrame carries the raw human channels (2D cursor plus a grip
axis). Retargeting maps channels into normalized joint action space via
a per-channel affine, with a stale-input policy: frames older than
STALE_HOLD_MS decay exponentially toward the neutral pose.

Scripted operators reproduce the canonical teleop flaw taxonomy: grabbing
too early, wrong grasp pose, excessive force, constant retargeting
offset, and lag plus jitter. The expert profile is the calibration
anchor: it must catch reliably on the easiest world.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CalibrationError, ContractError
from ..sim import WorldConfig, hand_model
from ..sim.shapes import Disk, grip_radius, shape_features
from ..sim.world import HandGeometry, SimState

STALE_HOLD_MS = 500.0
STALE_DECAY_MS = 250.0

PROFILES = ("expert", "early-grasp", "wrong-pose", "excessive-force",
            "retarget-offset", "lagged-jitter")


@dataclass
class TeleopFrame:
    t_ms: float
    cursor: np.ndarray        # (2,), normalized [-1, 1]
    grip: float               # [0, 1]
    source: str = "scripted"  # scripted | recorded | live
    seq: int = 0

    def to_dict(self):
        return {"t_ms": self.t_ms, "cursor": list(map(float, self.cursor)),
                "grip": float(self.grip), "source": self.source, "seq": self.seq}


@dataclass(frozen=True)
class ChannelMap:
    source: str       # cursor_x | cursor_y | grip
    offset: float
    scale: float


@dataclass(frozen=True)
class RetargetMap:
    channels: tuple   # one ChannelMap per action index

    def channel(self, idx):
        if idx >= len(self.channels) or self.channels[idx] is None:
            raise CalibrationError(f"action channel {idx} has no calibration")
        return self.channels[idx]


def default_retarget_map(config: WorldConfig) -> RetargetMap:
    """Cursor drives the palm target, grip drives every finger joint.

    Neutral input (cursor at origin, grip 0.5) maps to the all-zero
    action; channel extremes saturate at +/-1.
    """
    channels = [ChannelMap("cursor_x", 0.0, 1.0), ChannelMap("cursor_y", 0.0, 1.0)]
    channels += [ChannelMap("grip", 0.5, 2.0)] * (config.dof - 2)
    return RetargetMap(tuple(channels))


def retarget(frame: TeleopFrame, mapping: RetargetMap, now_ms=None):
    """Normalized, clamped reference action from a teleop frame."""
    raw = {"cursor_x": float(frame.cursor[0]), "cursor_y": float(frame.cursor[1]),
           "grip": float(frame.grip)}
    x_ref = np.empty(len(mapping.channels))
    for i in range(len(mapping.channels)):
        ch = mapping.channel(i)
        if ch.source not in raw:
            raise CalibrationError(f"unknown channel source {ch.source!r}")
        x_ref[i] = (raw[ch.source] - ch.offset) * ch.scale
    x_ref = np.clip(x_ref, -1.0, 1.0)

    if now_ms is not None:
        age = now_ms - frame.t_ms
        if age > STALE_HOLD_MS:
            x_ref *= np.exp(-(age - STALE_HOLD_MS) / STALE_DECAY_MS)
    return x_ref


def _fall_time(y, vy, y_land, g):
    """Ballistic time until y(t) = y_land, or 0 if already below."""
    drop = y - y_land
    if drop <= 0.0:
        return 0.0
    disc = vy * vy + 2.0 * g * drop
    return (vy + np.sqrt(disc)) / g


class ScriptedOperator:
    """Deterministic-for-seed teleop stream implementing one flaw profile."""

    # profile parameters (steps are control steps)
    EARLY_STEPS = 15
    LAG_STEPS = 24
    CLOSE_LEAD_S = 0.10
    WRONG_POSE_OFFSET = 0.18          # metres of pose misjudgment
    RETARGET_CHANNEL_OFFSET = 0.30    # injected cursor_x channel error
    JITTER_RHO = 0.92
    CURSOR_JITTER = 0.10
    GRIP_JITTER = 0.14

    def __init__(self, profile: str, config: WorldConfig,
                 rng: np.random.Generator):
        if profile not in PROFILES:
            raise ContractError(f"unknown teleop profile {profile!r}")
        self.profile = profile
        self.config = config
        self.rng = rng
        self.model = hand_model(config)
        self._gap_curve = self._tip_gap_curve()
        self._history = []
        self._jitter = np.zeros(3)
        self._contact_step = None
        self._seq = 0

    def _tip_gap_curve(self):
        """Horizontal fingertip gap as a function of uniform curl."""
        qs = np.linspace(self.config.finger_limits[0],
                         self.config.finger_limits[1], 200)
        gaps = []
        for qv in qs:
            q = self.model.default_q.copy()
            q[0], q[1] = 0.0, 0.3
            q[2:] = qv
            geom = HandGeometry(self.model, q)
            gaps.append(geom.tips[-1][0] - geom.tips[0][0])
        return qs, np.asarray(gaps)

    def _curl_for_gap(self, gap):
        qs, gaps = self._gap_curve
        order = np.argsort(gaps)
        return float(np.interp(gap, gaps[order], qs[order]))

    def _grip_for_curl(self, curl):
        lo, hi = self.config.finger_limits
        a = 2.0 * (curl - lo) / (hi - lo) - 1.0   # normalized finger action
        return float(np.clip(a / 2.0 + 0.5, 0.0, 1.0))

    def _norm_palm(self, x, y):
        mx, my = self.model.mid[0], self.model.mid[1]
        hx, hy = self.model.half_range[0], self.model.half_range[1]
        return np.clip([(x - mx) / hx, (y - my) / hy], -1.0, 1.0)

    def frame(self, state: SimState, t: int) -> TeleopFrame:
        cfg = self.config
        dt = cfg.dt
        obj = state.object
        r_eq = shape_features(obj.shape)[0]
        y_catch = cfg.palm_rest[1]
        y_land = y_catch + r_eq + cfg.palm_radius

        view = state
        if self.profile == "lagged-jitter":
            self._history.append(state)
            view = self._history[max(0, len(self._history) - 1 - self.LAG_STEPS)]
            obj = view.object

        t_star = _fall_time(obj.position[1], obj.velocity[1], y_land, cfg.gravity)
        x_pred = obj.position[0] + obj.velocity[0] * t_star
        if self.profile == "wrong-pose":
            x_pred += self.WRONG_POSE_OFFSET

        near = (np.linalg.norm(obj.position - view.hand.q[:2])
                < cfg.success_tolerance + 0.05)
        if self.profile == "early-grasp":
            if self._contact_step is None:
                self._contact_step = t + t_star / dt
            closing = t >= self._contact_step - self.EARLY_STEPS
        else:
            closing = t_star < self.CLOSE_LEAD_S or near

        if closing:
            if self.profile == "excessive-force":
                grip = 1.0  # full-curl squeeze past contact equilibrium
            elif self.profile == "early-grasp" and not near:
                # fist closed before arrival: nothing can enter
                grip = self._grip_for_curl(self._curl_for_gap(0.02))
            else:
                # light squeeze on disks, loose cage around polygon corners
                if isinstance(obj.shape, Disk):
                    gap = 2.0 * grip_radius(obj.shape) - 0.012
                else:
                    gap = 2.0 * grip_radius(obj.shape) + 0.006
                grip = self._grip_for_curl(self._curl_for_gap(gap))
        else:
            grip = self._grip_for_curl(-0.10)

        cursor = self._norm_palm(x_pred, y_catch)

        if self.profile == "retarget-offset":
            cursor[0] = np.clip(cursor[0] + self.RETARGET_CHANNEL_OFFSET, -1, 1)
        if self.profile == "lagged-jitter":
            noise = self.rng.standard_normal(3)
            sigma = np.array([self.CURSOR_JITTER, self.CURSOR_JITTER,
                              self.GRIP_JITTER])
            step_sigma = sigma * np.sqrt(1.0 - self.JITTER_RHO ** 2)
            self._jitter = self.JITTER_RHO * self._jitter + step_sigma * noise
            cursor = np.clip(cursor + self._jitter[:2], -1.0, 1.0)
            grip = float(np.clip(grip + self._jitter[2], 0.0, 1.0))

        self._seq += 1
        return TeleopFrame(t_ms=t * dt * 1000.0, cursor=np.asarray(cursor),
                           grip=grip, source="scripted", seq=self._seq)


def scripted_teleop(profile, state, t, rng, config=None, _cache={}):
    """One-shot convenience wrapper around ScriptedOperator.

    Stateless call sites (tests, quick probes) can use this; control
    loops should hold a ScriptedOperator so lag/jitter state persists.
    """
    if config is None:
        raise ContractError("scripted_teleop requires the world config")
    op = ScriptedOperator(profile, config, rng)
    return op.frame(state, t)
