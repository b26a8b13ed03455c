"""Application-level configuration: profiles, files, overrides.

One JSON document mirrors every module config:

    {"profile": "desk",
     "seed": 22,
     "world":   {...WorldConfig fields...},
     "ppo":     {...PpoConfig fields...},
     "dp":      {...DpConfig fields...},
     "daim":    {...DaimConfig fields...},
     "quality": {"delta": 0.1},
     "collect": {"train": 500, "val": 100, "exec_noise": 0.12, "m_points": 128},
     "serve":   {"host": "127.0.0.1", "port": 8061, "frame_every": 3}}

File values override the named profile; CLI flags override the file.
The "paper" profile carries the published table values (episode length
50, 8192 envs, [1024, 1024, 512] nets, 256-d features, 1300-point
clouds); "desk" is the CPU-sized variant used throughout the tests.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace

from ..daim import DaimConfig
from ..dataset import QualityConfig
from ..diffusion import DpConfig
from ..errors import ConfigError
from ..ppo import PpoConfig, ppo_profile
from ..sim import (ObjectSpec, RandomizationConfig, WorldConfig, desk_world,
                   easy_world)


@dataclass(frozen=True)
class CollectConfig:
    train: int = 500
    val: int = 100
    exec_noise: float = 0.12
    m_points: int = 128


@dataclass(frozen=True)
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8061
    frame_every: int = 3     # physics steps per broadcast frame (60 -> 20 Hz)
    cloud_points: int = 48   # downsampled cloud size in state frames


@dataclass
class AppConfig:
    profile: str
    seed: int
    world: WorldConfig
    ppo: PpoConfig
    dp: DpConfig
    daim: DaimConfig
    quality: QualityConfig
    collect: CollectConfig
    serve: ServeConfig


def profile(name: str) -> AppConfig:
    if name == "desk":
        return AppConfig(profile="desk", seed=22, world=desk_world(),
                         ppo=ppo_profile("desk"),
                         dp=DpConfig(d_f=64, train_steps=4000, batch_size=64,
                                     lr=8e-4),
                         daim=DaimConfig(), quality=QualityConfig(),
                         collect=CollectConfig(), serve=ServeConfig())
    if name == "easy":
        cfg = profile("desk")
        cfg.profile = "easy"
        cfg.world = easy_world()
        return cfg
    if name == "paper":
        world = replace(desk_world(), episode_length=50)
        return AppConfig(profile="paper", seed=22, world=world,
                         ppo=ppo_profile("paper"),
                         dp=DpConfig(d_f=256, train_steps=20_000,
                                     batch_size=256),
                         daim=DaimConfig(), quality=QualityConfig(),
                         collect=CollectConfig(train=5000, val=1000,
                                               m_points=1300),
                         serve=ServeConfig())
    raise ConfigError(f"unknown profile {name!r}")


def _build(cls, data, name):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from e


def world_from_dict(data) -> WorldConfig:
    data = dict(data)
    if "objects" in data:
        data["objects"] = tuple(
            _build(ObjectSpec, {**o, "vertices": tuple(map(tuple, o.get("vertices", ())))},
                   "world.objects")
            for o in data["objects"])
    if "randomization" in data:
        rnd = {k: tuple(v) if isinstance(v, list) else v
               for k, v in data["randomization"].items()}
        data["randomization"] = _build(RandomizationConfig, rnd,
                                       "world.randomization")
    for key, value in list(data.items()):
        if isinstance(value, list):
            data[key] = tuple(value)
    return _build(WorldConfig, data, "world")


def _merge_section(base, data, cls, name):
    if not data:
        return base
    current = {f.name: getattr(base, f.name) for f in fields(cls)}
    for k, v in data.items():
        if k not in current:
            raise ConfigError(f"{name}: unknown key {k!r}")
        current[k] = tuple(v) if isinstance(v, list) else v
    return _build(cls, current, name)


def load_config(path=None, profile_name=None, seed=None) -> AppConfig:
    """Assemble the app config: profile defaults <- file <- flag overrides."""
    doc = {}
    if path is not None:
        try:
            with open(path) as f:
                doc = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from e

    name = profile_name or doc.get("profile", "desk")
    cfg = profile(name)
    if "world" in doc:
        base = cfg.world.to_dict()
        merged = {**base, **doc["world"]}
        cfg.world = world_from_dict(merged)
    cfg.ppo = _merge_section(cfg.ppo, doc.get("ppo"), PpoConfig, "ppo")
    cfg.dp = _merge_section(cfg.dp, doc.get("dp"), DpConfig, "dp")
    cfg.daim = _merge_section(cfg.daim, doc.get("daim"), DaimConfig, "daim")
    cfg.quality = _merge_section(cfg.quality, doc.get("quality"),
                                 QualityConfig, "quality")
    cfg.collect = _merge_section(cfg.collect, doc.get("collect"),
                                 CollectConfig, "collect")
    cfg.serve = _merge_section(cfg.serve, doc.get("serve"), ServeConfig,
                               "serve")
    if "seed" in doc:
        cfg.seed = int(doc["seed"])
    if seed is not None:
        cfg.seed = int(seed)
    return cfg
