"""Deterministic 2D catching world.

A planar hand (palm on two prismatic joints, revolute fingers) and one
rigid object integrate under semi-implicit Euler with penalty-spring
contacts and a Coulomb-clamped tangential force. Actions are normalized
absolute joint position targets driven by a PD controller whose clipped
torque is held constant across the substeps of one control step.

`step` and `reset` are pure with respect to their inputs: a (seed,
action sequence) pair always reproduces the same trajectory bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SimFault
from .config import WorldConfig
from .shapes import Disk, Polygon, build_shape, contact_probes, rot_matrix

GRAVITY_DIR = np.array([0.0, -1.0])


@dataclass
class ObjectState:
    position: np.ndarray          # (2,)
    velocity: np.ndarray          # (2,)
    theta: float
    omega: float
    shape: object                 # Disk | Polygon, already scaled
    mass: float
    inertia: float
    friction: float               # episode Coulomb coefficient
    target_theta: float
    name: str

    def copy(self):
        return ObjectState(self.position.copy(), self.velocity.copy(), self.theta,
                           self.omega, self.shape, self.mass, self.inertia,
                           self.friction, self.target_theta, self.name)

    def to_dict(self):
        if isinstance(self.shape, Disk):
            shape = {"kind": "disk", "radius": self.shape.radius}
        else:
            shape = {"kind": "polygon", "vertices": self.shape.vertices.tolist()}
        return {"p": self.position.tolist(), "v": self.velocity.tolist(),
                "theta": self.theta, "omega": self.omega, "shape": shape,
                "mass": self.mass, "inertia": self.inertia,
                "friction": self.friction, "target_theta": self.target_theta,
                "name": self.name}

    @staticmethod
    def from_dict(d):
        if d["shape"]["kind"] == "disk":
            shape = Disk(d["shape"]["radius"])
        else:
            shape = Polygon(np.asarray(d["shape"]["vertices"]))
        return ObjectState(np.asarray(d["p"], dtype=np.float64),
                           np.asarray(d["v"], dtype=np.float64),
                           d["theta"], d["omega"], shape, d["mass"], d["inertia"],
                           d["friction"], d["target_theta"], d["name"])


@dataclass
class HandState:
    q: np.ndarray                 # (dof,) joint positions
    qd: np.ndarray                # (dof,) joint velocities
    applied_torques: np.ndarray   # (dof,) clipped PD actuation of the last step
    tips: np.ndarray              # (fingers, 2) fingertip positions
    tip_velocities: np.ndarray    # (fingers, 2)
    tip_omegas: np.ndarray        # (fingers,) distal link angular velocities

    @property
    def palm(self):
        return self.q[:2]

    def copy(self):
        return HandState(self.q.copy(), self.qd.copy(), self.applied_torques.copy(),
                         self.tips.copy(), self.tip_velocities.copy(),
                         self.tip_omegas.copy())

    def to_dict(self):
        return {"q": self.q.tolist(), "qd": self.qd.tolist(),
                "tau": self.applied_torques.tolist(), "tips": self.tips.tolist(),
                "tip_v": self.tip_velocities.tolist(),
                "tip_w": self.tip_omegas.tolist()}

    @staticmethod
    def from_dict(d):
        return HandState(np.asarray(d["q"], dtype=np.float64),
                         np.asarray(d["qd"], dtype=np.float64),
                         np.asarray(d["tau"], dtype=np.float64),
                         np.asarray(d["tips"], dtype=np.float64),
                         np.asarray(d["tip_v"], dtype=np.float64),
                         np.asarray(d["tip_w"], dtype=np.float64))


@dataclass
class SimState:
    object: ObjectState
    hand: HandState
    t: int
    dropped: bool
    hold_counter: int

    def copy(self):
        return SimState(self.object.copy(), self.hand.copy(), self.t, self.dropped,
                        self.hold_counter)

    def to_dict(self):
        return {"object": self.object.to_dict(), "hand": self.hand.to_dict(),
                "t": self.t, "dropped": self.dropped,
                "hold_counter": self.hold_counter}

    @staticmethod
    def from_dict(d):
        return SimState(ObjectState.from_dict(d["object"]),
                        HandState.from_dict(d["hand"]), d["t"], d["dropped"],
                        d["hold_counter"])


@dataclass(frozen=True)
class EpisodeParams:
    object_name: str
    mass_scale: float
    friction_scale: float
    object_scale: float
    init_vx: float

    def to_dict(self):
        return {"object_name": self.object_name, "mass_scale": self.mass_scale,
                "friction_scale": self.friction_scale,
                "object_scale": self.object_scale, "init_vx": self.init_vx}


class HandModel:
    """Derived constant arrays for a WorldConfig's hand."""

    def __init__(self, cfg: WorldConfig):
        self.cfg = cfg
        dof = cfg.dof
        F, L = cfg.fingers, cfg.links_per_finger
        self.fingers, self.links = F, L
        self.link_lengths = np.asarray(cfg.link_lengths[:L], dtype=np.float64)
        if len(self.link_lengths) != L:
            raise ValueError("link_lengths shorter than links_per_finger")

        # finger bases spread along the palm; curl sign points toward the center
        if F == 1:
            xs = np.array([-cfg.palm_half_width])
        else:
            xs = np.linspace(-cfg.palm_half_width, cfg.palm_half_width, F)
        self.base_offsets = np.stack([xs, np.zeros(F)], axis=1)
        self.signs = np.where(xs <= 0, 1.0, -1.0)

        lo = np.empty(dof)
        hi = np.empty(dof)
        lo[0], hi[0] = cfg.palm_limits_x
        lo[1], hi[1] = cfg.palm_limits_y
        lo[2:], hi[2:] = cfg.finger_limits
        self.lo, self.hi = lo, hi
        self.half_range = 0.5 * (hi - lo)
        self.mid = 0.5 * (hi + lo)

        self.kp = np.concatenate([[cfg.palm_kp] * 2, [cfg.finger_kp] * (dof - 2)])
        self.kd = np.concatenate([[cfg.palm_kd] * 2, [cfg.finger_kd] * (dof - 2)])
        self.tau_limit = np.concatenate([[cfg.palm_force_limit] * 2,
                                         [cfg.finger_torque_limit] * (dof - 2)])
        self.inertia = np.concatenate([[cfg.palm_mass] * 2,
                                       [cfg.finger_inertia] * (dof - 2)])
        self.qd_max = np.concatenate([[cfg.palm_speed_limit] * 2,
                                      [cfg.finger_speed_limit] * (dof - 2)])
        self.viscous = np.concatenate([[0.0, 0.0], [cfg.joint_viscous] * (dof - 2)])

        self.default_q = np.concatenate([np.asarray(cfg.palm_rest),
                                         np.full(dof - 2, cfg.finger_rest)])
        self.default_q = np.clip(self.default_q, lo, hi)

        # static per-segment tables (palm first, then finger links in order)
        n_seg = 1 + F * L
        self.seg_r = np.concatenate([[cfg.palm_radius],
                                     np.full(F * L, cfg.link_radius)])
        self.seg_finger = np.concatenate(
            [[-1], np.repeat(np.arange(F), L)]).astype(np.int64)
        self.seg_link = np.concatenate(
            [[-1], np.tile(np.arange(L), F)]).astype(np.int64)

    def joint_index(self, finger, link):
        return 2 + finger * self.links + link

    def targets_from_action(self, action):
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        return self.mid + a * self.half_range


_MODEL_CACHE = {}


def hand_model(cfg: WorldConfig) -> HandModel:
    model = _MODEL_CACHE.get(cfg)
    if model is None:
        model = HandModel(cfg)
        _MODEL_CACHE[cfg] = model
    return model


class HandGeometry:
    """World-frame segments, pivots and tips for one (q, qd)."""

    __slots__ = ("palm", "seg_a", "seg_b", "seg_r", "seg_finger", "seg_link",
                 "pivots", "dirs", "tips")

    def __init__(self, model: HandModel, q):
        cfg = model.cfg
        F, L = model.fingers, model.links
        palm = q[:2]
        self.palm = palm

        phi = np.cumsum(q[2:].reshape(F, L), axis=1)
        dirs = np.empty((F, L, 2))
        np.sin(phi, out=dirs[:, :, 0])
        dirs[:, :, 0] *= model.signs[:, None]
        np.cos(phi, out=dirs[:, :, 1])
        self.dirs = dirs

        pivots = np.empty((F, L, 2))
        pivots[:, 0] = palm + model.base_offsets
        for j in range(1, L):
            pivots[:, j] = pivots[:, j - 1] + model.link_lengths[j - 1] * dirs[:, j - 1]
        self.pivots = pivots
        ends = pivots + model.link_lengths[None, :, None] * dirs
        self.tips = ends[:, -1]

        n_seg = 1 + F * L
        seg_a = np.empty((n_seg, 2))
        seg_b = np.empty((n_seg, 2))
        w = cfg.palm_half_width
        seg_a[0, 0] = palm[0] - w
        seg_a[0, 1] = palm[1]
        seg_b[0, 0] = palm[0] + w
        seg_b[0, 1] = palm[1]
        seg_a[1:] = pivots.reshape(-1, 2)
        seg_b[1:] = ends.reshape(-1, 2)
        self.seg_a, self.seg_b = seg_a, seg_b
        self.seg_r = model.seg_r
        self.seg_finger = model.seg_finger
        self.seg_link = model.seg_link


def _perp(v):
    return np.array([-v[1], v[0]])


def _point_jacobian_rows(point, finger, link, geom, model):
    """(joint index, 2-vector) rows of d(point)/dq for a hand-surface point."""
    rows = [(0, np.array([1.0, 0.0])), (1, np.array([0.0, 1.0]))]
    if finger >= 0:
        s = model.signs[finger]
        for m in range(link + 1):
            rows.append((model.joint_index(finger, m),
                         -s * _perp(point - geom.pivots[finger, m])))
    return rows


def _hand_point_velocity(point, finger, link, geom, model, qd):
    v = qd[:2].copy()
    if finger >= 0:
        s = model.signs[finger]
        for m in range(link + 1):
            v += qd[model.joint_index(finger, m)] * (-s) * _perp(point - geom.pivots[finger, m])
    return v


def _closest_on_segments(points, seg_a, seg_b):
    """Closest points and distances from each point to each segment."""
    ab = seg_b - seg_a                                  # (S, 2)
    denom = np.maximum((ab * ab).sum(axis=1), 1e-16)
    ap = points[:, None, :] - seg_a[None, :, :]          # (P, S, 2)
    t = np.clip((ap * ab[None, :, :]).sum(axis=2) / denom, 0.0, 1.0)
    closest = seg_a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return closest, d


def _object_probes(obj: ObjectState, cfg: WorldConfig):
    """(world probe centers, probe radii) approximating the object boundary."""
    if isinstance(obj.shape, Disk):
        return obj.position[None, :], np.array([obj.shape.radius])
    local = contact_probes(obj.shape, cfg.probe_spacing)
    world = obj.position + local @ rot_matrix(obj.theta).T
    return world, np.full(len(world), cfg.probe_radius)


def _contact_pass(obj, geom, model, cfg, qd):
    """Penalty contact forces: returns (force, torque) on the object and
    generalized forces on the hand joints."""
    probes, probe_r = _object_probes(obj, cfg)
    closest, dist = _closest_on_segments(probes, geom.seg_a, geom.seg_b)
    pen = (probe_r[:, None] + geom.seg_r[None, :]) - dist
    hits = np.argwhere(pen > 0.0)

    f_obj = np.zeros(2)
    t_obj = 0.0
    gen = np.zeros(len(qd))
    if len(hits) == 0:
        return f_obj, t_obj, gen

    for pi, si in hits:
        d = dist[pi, si]
        if d > 1e-12:
            n = (probes[pi] - closest[pi, si]) / d
        else:
            n = np.array([0.0, 1.0])
        cp = closest[pi, si] + n * geom.seg_r[si]
        finger, link = geom.seg_finger[si], geom.seg_link[si]

        r = cp - obj.position
        v_obj = obj.velocity + obj.omega * _perp(r)
        v_hand = _hand_point_velocity(cp, finger, link, geom, model, qd)
        vrel = v_obj - v_hand
        vn = float(vrel @ n)
        tangent = _perp(n)
        vt = float(vrel @ tangent)

        fn = cfg.contact_stiffness * pen[pi, si] - cfg.contact_damping * vn
        if fn <= 0.0:
            continue
        cap = obj.friction * fn
        ft = -np.clip(cfg.tangential_damping * vt, -cap, cap)
        force = fn * n + ft * tangent

        f_obj += force
        t_obj += r[0] * force[1] - r[1] * force[0]
        for jidx, jac in _point_jacobian_rows(cp, finger, link, geom, model):
            gen[jidx] -= float(jac @ force)
    return f_obj, t_obj, gen


def _refresh_tip_state(hand: HandState, geom: HandGeometry, model: HandModel):
    F, L = model.fingers, model.links
    hand.tips = geom.tips.copy()
    vels = np.empty((F, 2))
    omegas = np.empty(F)
    for f in range(F):
        vels[f] = _hand_point_velocity(geom.tips[f], f, L - 1, geom, model, hand.qd)
        j0 = model.joint_index(f, 0)
        omegas[f] = -model.signs[f] * hand.qd[j0:j0 + L].sum()
    hand.tip_velocities = vels
    hand.tip_omegas = omegas


def reset(config: WorldConfig, rng: np.random.Generator):
    """Spawn a randomized episode. Returns (SimState, EpisodeParams)."""
    model = hand_model(config)
    rnd = config.randomization

    spec_idx = int(rng.integers(len(config.objects)))
    spec = config.objects[spec_idx]
    if rnd.enabled:
        mass_scale = float(rng.uniform(*rnd.mass_range))
        friction_scale = float(rng.uniform(*rnd.friction_range))
        obj_scale = float(rng.uniform(*rnd.scale_range))
        pos_noise = rng.uniform(-rnd.pos_noise, rnd.pos_noise, size=2)
        theta0 = float(rng.uniform(-rnd.theta_noise, rnd.theta_noise)) if rnd.theta_noise else 0.0
        init_vx = float(rng.uniform(*rnd.init_vx_range))
        dof_noise = rng.uniform(-1.0, 1.0, size=config.dof) * rnd.dof_pos_random * model.half_range
    else:
        mass_scale = friction_scale = obj_scale = 1.0
        pos_noise = np.zeros(2)
        theta0 = 0.0
        init_vx = 0.0
        dof_noise = np.zeros(config.dof)

    shape = build_shape(spec, obj_scale)
    mass = spec.mass * mass_scale
    obj = ObjectState(
        position=np.asarray(config.spawn_pos, dtype=np.float64) + pos_noise,
        velocity=np.array([init_vx, 0.0]),
        theta=theta0,
        omega=0.0,
        shape=shape,
        mass=mass,
        inertia=mass * shape.inertia_per_mass(),
        friction=config.friction * friction_scale,
        target_theta=spec.target_theta,
        name=spec.name,
    )

    q = np.clip(model.default_q + dof_noise, model.lo, model.hi)
    qd = np.zeros(config.dof)
    hand = HandState(q=q, qd=qd, applied_torques=np.zeros(config.dof),
                     tips=np.zeros((model.fingers, 2)),
                     tip_velocities=np.zeros((model.fingers, 2)),
                     tip_omegas=np.zeros(model.fingers))
    _refresh_tip_state(hand, HandGeometry(model, q), model)

    state = SimState(object=obj, hand=hand, t=0, dropped=False, hold_counter=0)
    params = EpisodeParams(object_name=spec.name, mass_scale=mass_scale,
                           friction_scale=friction_scale, object_scale=obj_scale,
                           init_vx=init_vx)
    return state, params


def step(state: SimState, action, config: WorldConfig) -> SimState:
    """Advance one control step of `config.dt` split into substeps."""
    model = hand_model(config)
    nxt = state.copy()
    obj, hand = nxt.object, nxt.hand

    targets = model.targets_from_action(action)
    tau = np.clip(model.kp * (targets - hand.q) - model.kd * hand.qd,
                  -model.tau_limit, model.tau_limit)
    hand.applied_torques = tau

    dt_s = config.dt / config.substeps
    grav = config.gravity * GRAVITY_DIR
    for _ in range(config.substeps):
        geom = HandGeometry(model, hand.q)
        f_obj, t_obj, gen = _contact_pass(obj, geom, model, config, hand.qd)

        acc = (tau + gen - model.viscous * hand.qd) / model.inertia
        hand.qd = np.clip(hand.qd + dt_s * acc, -model.qd_max, model.qd_max)
        q_new = hand.q + dt_s * hand.qd
        below = q_new < model.lo
        above = q_new > model.hi
        hand.q = np.clip(q_new, model.lo, model.hi)
        hand.qd[below & (hand.qd < 0)] = 0.0
        hand.qd[above & (hand.qd > 0)] = 0.0

        obj.velocity = obj.velocity + dt_s * (f_obj / obj.mass + grav)
        speed = np.linalg.norm(obj.velocity)
        if speed > config.object_speed_limit:
            obj.velocity = obj.velocity * (config.object_speed_limit / speed)
        obj.omega = float(np.clip(obj.omega + dt_s * t_obj / obj.inertia,
                                  -config.object_spin_limit,
                                  config.object_spin_limit))
        obj.position = obj.position + dt_s * obj.velocity
        obj.theta = obj.theta + dt_s * obj.omega

    _refresh_tip_state(hand, HandGeometry(model, hand.q), model)
    nxt.t = state.t + 1
    if obj.position[1] < config.floor_height:
        nxt.dropped = True

    palm_dist = float(np.linalg.norm(obj.position - hand.q[:2]))
    speed = float(np.linalg.norm(obj.velocity))
    if (not nxt.dropped and palm_dist < config.success_tolerance
            and speed < config.hold_speed):
        nxt.hold_counter = state.hold_counter + 1
    else:
        nxt.hold_counter = 0

    finite = (np.isfinite(hand.q).all() and np.isfinite(hand.qd).all()
              and np.isfinite(obj.position).all() and np.isfinite(obj.velocity).all()
              and np.isfinite([obj.theta, obj.omega]).all())
    if not finite:
        raise SimFault(f"non-finite simulation state at step {nxt.t}", step=nxt.t)
    return nxt
