"""Episode replay logs: JSON Lines, bit-exact re-simulation.

First record is a header (format version, mode, full world config and its
hash, env seed material, episode randomization); then one record per step
with the serialized post-step state, the executed action, the reward
breakdown, and events. Blend trace rows interleave after the step they
belong to. Python's JSON float round-trip is exact for float64, so a
replayed episode must reproduce every stored state bit for bit.
"""
from __future__ import annotations

import json

import numpy as np

from ..errors import ContractError
from ..sim import WorldConfig, reset, step
from .profiles import world_from_dict

FORMAT_VERSION = 1


def seed_material(seed_seq):
    """JSON-serializable identity of a SeedSequence or integer seed."""
    if isinstance(seed_seq, (int, np.integer)):
        return int(seed_seq)
    return {"entropy": int(seed_seq.entropy),
            "spawn_key": [int(k) for k in seed_seq.spawn_key]}


def rng_from_material(material):
    if isinstance(material, dict):
        ss = np.random.SeedSequence(entropy=material["entropy"],
                                    spawn_key=tuple(material["spawn_key"]))
        return np.random.default_rng(ss)
    return np.random.default_rng(material)


class ReplayWriter:
    def __init__(self, path, env_seed):
        self.f = open(path, "w")
        self.env_seed = env_seed

    def write_header(self, config: WorldConfig, mode, episode_params):
        rec = {"kind": "header", "format_version": FORMAT_VERSION,
               "mode": mode, "config": config.to_dict(),
               "config_hash": config.config_hash(),
               "env_seed": seed_material(self.env_seed),
               "episode_params": episode_params.to_dict()}
        self.f.write(json.dumps(rec) + "\n")

    def write_step(self, t, state, action, rbd, info):
        rec = {"kind": "step", "t": t, "state": state.to_dict(),
               "action": [float(a) for a in np.asarray(action)],
               "reward": rbd.to_dict(),
               "events": {"dropped_now": bool(info.get("dropped_now")),
                          "success": bool(info.get("success"))}}
        self.f.write(json.dumps(rec) + "\n")

    def write_blend(self, t, trace):
        rec = {"kind": "blend", "t": t}
        rec.update(trace.to_dict())
        self.f.write(json.dumps(rec) + "\n")

    def close(self):
        self.f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_replay(path):
    """Returns (header, steps, blends)."""
    header, steps, blends = None, [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "header":
                header = rec
            elif kind == "step":
                steps.append(rec)
            elif kind == "blend":
                blends.append(rec)
            else:
                raise ContractError(f"{path}:{lineno}: unknown record kind {kind!r}")
    if header is None:
        raise ContractError(f"{path}: missing header record")
    if header.get("format_version") != FORMAT_VERSION:
        raise ContractError(f"{path}: unsupported replay format version")
    return header, steps, blends


def verify_replay(path):
    """Re-simulate from the header seed and stored actions.

    Returns None when every stored state is reproduced bit-exactly,
    otherwise the first divergent step index.
    """
    header, steps, _ = read_replay(path)
    config = world_from_dict(header["config"])
    if config.config_hash() != header["config_hash"]:
        raise ContractError(f"{path}: config hash mismatch")
    rng = rng_from_material(header["env_seed"])
    state, _ = reset(config, rng)
    for rec in steps:
        state = step(state, np.asarray(rec["action"]), config)
        if state.to_dict() != rec["state"]:
            return rec["t"]
    return None
