"""World configuration for the 2D catching simulator.

Configs are frozen dataclasses so derived kinematic models can be cached
per config instance. The actuated joint layout is:

    q[0] palm x (prismatic, m)
    q[1] palm y (prismatic, m)
    q[2:] finger joints (revolute, rad), grouped per finger

so the default 2-finger x 2-link hand exposes 6 actions in [-1, 1].
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from ..errors import ConfigError


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    kind: str  # "disk" | "polygon"
    radius: float = 0.055            # disk radius (m)
    vertices: tuple = ()             # polygon body-frame vertices, CCW
    mass: float = 0.06               # kg
    target_theta: float = 0.0        # desired resting orientation (rad)


@dataclass(frozen=True)
class RandomizationConfig:
    enabled: bool = True
    mass_range: tuple = (0.5, 1.5)       # multiplicative
    friction_range: tuple = (0.7, 1.3)   # multiplicative
    scale_range: tuple = (0.95, 1.05)    # multiplicative
    pos_noise: float = 0.01              # uniform +/- on spawn position (m)
    dof_pos_random: float = 0.2          # uniform +/- fraction of joint half-range
    init_vx_range: tuple = (0.0, 0.0)    # initial horizontal object velocity (m/s)
    theta_noise: float = 0.0             # uniform +/- on spawn orientation (rad)


@dataclass(frozen=True)
class WorldConfig:
    dt: float = 1.0 / 60.0
    substeps: int = 8
    episode_length: int = 120            # desk default; source tables use 50
    gravity: float = 9.81

    fingers: int = 2
    links_per_finger: int = 2
    link_lengths: tuple = (0.07, 0.06)
    link_radius: float = 0.010
    palm_half_width: float = 0.09
    palm_radius: float = 0.012
    palm_limits_x: tuple = (-0.45, 0.45)
    palm_limits_y: tuple = (0.05, 0.55)
    finger_limits: tuple = (-0.25, 1.60)

    palm_mass: float = 0.6
    palm_kp: float = 180.0
    palm_kd: float = 21.0
    palm_force_limit: float = 40.0
    palm_speed_limit: float = 3.0

    finger_inertia: float = 5e-4
    finger_kp: float = 0.4
    finger_kd: float = 0.028
    finger_torque_limit: float = 0.8
    finger_speed_limit: float = 25.0
    joint_viscous: float = 0.002

    contact_stiffness: float = 900.0
    contact_damping: float = 10.0
    tangential_damping: float = 5.0
    friction: float = 0.8                # nominal Coulomb coefficient
    probe_radius: float = 0.004
    probe_spacing: float = 0.025
    object_speed_limit: float = 10.0     # integrator safety caps
    object_spin_limit: float = 80.0

    success_tolerance: float = 0.1       # object-palm distance gate (m)
    hold_steps: int = 30                 # consecutive in-tolerance steps for success
    hold_speed: float = 0.35             # max object speed while holding (m/s)
    floor_height: float = 0.0

    spawn_pos: tuple = (0.08, 0.42)
    palm_rest: tuple = (-0.08, 0.12)
    finger_rest: float = 0.12

    objects: tuple = (ObjectSpec(name="disk", kind="disk"),)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        if self.success_tolerance <= 0:
            raise ConfigError("success tolerance must be > 0")
        if not self.objects:
            raise ConfigError("at least one object spec required")
        for name, rng_ in (("mass", self.randomization.mass_range),
                           ("friction", self.randomization.friction_range),
                           ("scale", self.randomization.scale_range),
                           ("init_vx", self.randomization.init_vx_range)):
            if rng_[0] > rng_[1]:
                raise ConfigError(f"{name} range is degenerate: {rng_}")
        for name, lim in (("palm x", self.palm_limits_x),
                          ("palm y", self.palm_limits_y),
                          ("finger", self.finger_limits)):
            if lim[0] >= lim[1]:
                raise ConfigError(f"{name} joint limits not ordered: {lim}")

    @property
    def dof(self):
        return 2 + self.fingers * self.links_per_finger

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _poly(name, vertices, mass, target_theta=0.0):
    return ObjectSpec(name=name, kind="polygon", vertices=tuple(map(tuple, vertices)),
                      mass=mass, target_theta=target_theta)


def square_spec(name="square", half_side=0.05, mass=0.07):
    h = half_side
    return _poly(name, [(-h, -h), (h, -h), (h, h), (-h, h)], mass)


def hexagon_spec(name="hex", radius=0.068, mass=0.08):
    import math
    pts = [(radius * math.cos(a), radius * math.sin(a))
           for a in [math.pi / 6 + i * math.pi / 3 for i in range(6)]]
    return _poly(name, pts, mass)


def desk_world(randomize=True, motion=True):
    """Default desk-scale world: three object classes, full randomization."""
    rnd = RandomizationConfig(
        enabled=randomize,
        init_vx_range=(-0.35, 0.35) if motion else (0.0, 0.0),
        theta_noise=0.25 if randomize else 0.0,
    )
    return WorldConfig(
        objects=(ObjectSpec(name="disk", kind="disk", radius=0.042, mass=0.05),
                 square_spec(),
                 hexagon_spec()),
        randomization=rnd,
        spawn_pos=(0.0, 0.42),
    )


def easy_world():
    """Easiest profile: single disk, vertical drop, no randomization.

    The workspace is a tight catch zone (palm cannot flail into the drop
    corridor) and disk-only contact is stable at 4 substeps.
    """
    return WorldConfig(
        objects=(ObjectSpec(name="disk", kind="disk", radius=0.055, mass=0.06),),
        randomization=RandomizationConfig(enabled=False),
        spawn_pos=(0.08, 0.42),
        palm_limits_x=(-0.3, 0.3),
        palm_limits_y=(0.05, 0.24),
        substeps=4,
    )


def with_overrides(config: WorldConfig, **kwargs) -> WorldConfig:
    return replace(config, **kwargs)
