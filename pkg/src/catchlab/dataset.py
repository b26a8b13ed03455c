"""Quality-gated trajectory datasets.

A trajectory is the per-step sequence (state, cloud, action) plus outcome
metadata. The acceptance gate keeps a trajectory only when the object was
never dropped AND the final object-palm distance is strictly below the
threshold delta. Accepted trajectories fill train/val splits at a 5:1
ratio; rejected ones are counted and discarded.

On-disk layout:

    <root>/manifest.json
    <root>/train/traj_00000.jsonl ...
    <root>/val/traj_00000.jsonl ...

Each trajectory file holds one meta record followed by step records
{t, s, p:{m, d, points}, a}. The manifest records per-file SHA-256
hashes, split counts, object classes, the world config hash, and the
train-split normalization statistics consumed by diffusion training.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError
from .percept import sample_cloud
from .sim import CatchEnv, WorldConfig, proprio_state

FORMAT_VERSION = 1

# proprio_state layout anchors (see sim.env.proprio_state)
S_OBJ_POS = slice(0, 2)
S_PALM = slice(7, 9)


@dataclass(frozen=True)
class QualityConfig:
    delta: float = 0.1

    def __post_init__(self):
        if self.delta <= 0:
            raise DatasetError("quality delta must be > 0")


@dataclass
class TrajMeta:
    seed: int
    dropped: bool
    final_distance: float
    success: bool
    object_class: str

    def to_dict(self):
        return {"kind": "meta", "seed": self.seed, "dropped": self.dropped,
                "final_distance": self.final_distance, "success": self.success,
                "object_class": self.object_class}


@dataclass
class Trajectory:
    states: np.ndarray      # (T, s_dim)
    clouds: np.ndarray      # (T, M, d)
    actions: np.ndarray     # (T, dof)
    meta: TrajMeta
    traj_id: str = ""

    def __len__(self):
        return len(self.states)

    def validate(self):
        if len(self.states) == 0:
            raise DatasetError("trajectory is empty")
        if not (len(self.states) == len(self.clouds) == len(self.actions)):
            raise DatasetError("trajectory arrays disagree on length")
        final = float(np.linalg.norm(self.states[-1, S_OBJ_POS]
                                     - self.states[-1, S_PALM]))
        if abs(final - self.meta.final_distance) > 1e-9:
            raise DatasetError(
                f"meta.final_distance {self.meta.final_distance} does not match "
                f"recomputed {final}")


def evaluate_quality(traj: Trajectory, cfg: QualityConfig) -> int:
    """1 iff no drop and final distance strictly below delta, else 0."""
    meta = traj.meta
    if meta is None:
        raise DatasetError("trajectory meta missing")
    return int((not meta.dropped) and meta.final_distance < cfg.delta)


@dataclass
class Dataset:
    train: list
    val: list
    manifest: dict = field(default_factory=dict)

    def normalization(self):
        return self.manifest["normalization"]


def _normalization_stats(trajs):
    """Per-dimension means and stds over the train split.

    The std floors are scale-aware, not epsilon: a near-constant action
    dimension would otherwise normalize small real-world differences
    (e.g. a teleop reference vs. the recorded constant) into values in
    the thousands and blow up anything conditioned on them.
    """
    states = np.concatenate([t.states for t in trajs], axis=0)
    actions = np.concatenate([t.actions for t in trajs], axis=0)
    return {
        "state_mean": states.mean(axis=0).tolist(),
        "state_std": np.maximum(states.std(axis=0), 1e-2).tolist(),
        "action_mean": actions.mean(axis=0).tolist(),
        "action_std": np.maximum(actions.std(axis=0), 5e-2).tolist(),
    }


def record_episode(env: CatchEnv, action_source, cloud_rng, m_points,
                   seed_tag=0, exec_noise=0.0, noise_rng=None):
    """Roll one episode, recording (state, cloud, action) per step.

    With `exec_noise > 0`, the executed action is the source's command
    plus Gaussian exploration noise while the recorded label stays clean;
    visited states then cover a tube around the collection policy so the
    cloned policy is robust to its own small deviations.
    """
    state = env.reset()
    states, clouds, actions = [], [], []
    done = False
    t = 0
    info = {"success": False}
    while not done:
        s_vec = proprio_state(state)
        cloud = sample_cloud(state.object, m_points, cloud_rng)
        action = np.clip(np.asarray(action_source(state, t), dtype=np.float64),
                         -1.0, 1.0)
        states.append(s_vec)
        clouds.append(cloud)
        actions.append(action)
        executed = action
        if exec_noise > 0.0 and noise_rng is not None:
            executed = np.clip(
                action + exec_noise * noise_rng.standard_normal(len(action)),
                -1.0, 1.0)
        state, _, _, done, info = env.step(executed)
        t += 1
    final = float(np.linalg.norm(states[-1][S_OBJ_POS] - states[-1][S_PALM]))
    meta = TrajMeta(seed=seed_tag, dropped=state.dropped, final_distance=final,
                    success=bool(info["success"]),
                    object_class=state.object.name)
    return Trajectory(np.asarray(states), np.asarray(clouds),
                      np.asarray(actions), meta)


def collect(source_factory, world_config: WorldConfig, targets, seed,
            quality: QualityConfig = QualityConfig(), m_points=256,
            min_acceptance=0.01, acceptance_window=10_000, exec_noise=0.0):
    """Roll episodes until both splits hit their accepted-trajectory targets.

    `source_factory(episode_index, rng)` must return a per-episode action
    callable `(sim_state, t) -> action`. Returns (Dataset, collection_log);
    the log has one row per episode for post-hoc gate audits.
    """
    want_train, want_val = targets["train"], targets["val"]
    ss = np.random.SeedSequence(seed)
    train, val = [], []
    log = []
    episode = 0
    accepted = 0
    while len(train) < want_train or len(val) < want_val:
        if episode >= acceptance_window and accepted < min_acceptance * episode:
            raise DatasetError(
                f"acceptance rate {accepted}/{episode} below "
                f"{min_acceptance:.0%} after {episode} episodes; "
                "collection policy too weak")
        env_rng, cloud_rng, src_rng, noise_rng = (np.random.default_rng(s)
                                                  for s in ss.spawn(4))
        env = CatchEnv(world_config, env_rng)
        source = source_factory(episode, src_rng)
        traj = record_episode(env, source, cloud_rng, m_points, seed_tag=episode,
                              exec_noise=exec_noise, noise_rng=noise_rng)
        ok = evaluate_quality(traj, quality)
        log.append({"episode": episode, "dropped": traj.meta.dropped,
                    "final_distance": traj.meta.final_distance,
                    "accepted": bool(ok)})
        if ok:
            # every sixth accepted trajectory goes to validation (5:1)
            to_val = (accepted % 6 == 5 and len(val) < want_val) \
                or len(train) >= want_train
            if to_val and len(val) < want_val:
                traj.traj_id = f"val/traj_{len(val):05d}"
                val.append(traj)
            elif len(train) < want_train:
                traj.traj_id = f"train/traj_{len(train):05d}"
                train.append(traj)
            accepted += 1
        episode += 1

    manifest = {
        "format_version": FORMAT_VERSION,
        "counts": {"train": len(train), "val": len(val)},
        "classes": sorted({t.meta.object_class for t in train + val}),
        "config_hash": world_config.config_hash(),
        "quality_delta": quality.delta,
        "m_points": m_points,
        "exec_noise": exec_noise,
        "normalization": _normalization_stats(train),
        "episodes_rolled": episode,
        "acceptance_rate": accepted / episode,
    }
    return Dataset(train=train, val=val, manifest=manifest), log


def _traj_lines(traj: Trajectory):
    yield json.dumps(traj.meta.to_dict())
    m, d = traj.clouds.shape[1], traj.clouds.shape[2]
    for t in range(len(traj)):
        yield json.dumps({
            "t": t,
            "s": traj.states[t].tolist(),
            "p": {"m": m, "d": d, "points": traj.clouds[t].reshape(-1).tolist()},
            "a": traj.actions[t].tolist(),
        })


def save(dataset: Dataset, root):
    root = str(root)
    files = {}
    for split_name, trajs in (("train", dataset.train), ("val", dataset.val)):
        os.makedirs(os.path.join(root, split_name), exist_ok=True)
        for i, traj in enumerate(trajs):
            rel = f"{split_name}/traj_{i:05d}.jsonl"
            payload = ("\n".join(_traj_lines(traj)) + "\n").encode("utf-8")
            with open(os.path.join(root, rel), "wb") as f:
                f.write(payload)
            files[rel] = hashlib.sha256(payload).hexdigest()
    manifest = dict(dataset.manifest)
    manifest["files"] = files
    with open(os.path.join(root, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def _parse_traj(path, rel):
    meta = None
    states, clouds, actions = [], [], []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{rel}: corrupt JSON at line {lineno}: {e}") from e
            if lineno == 1:
                if rec.get("kind") != "meta":
                    raise DatasetError(f"{rel}: line 1 is not a meta record")
                meta = TrajMeta(seed=rec["seed"], dropped=rec["dropped"],
                                final_distance=rec["final_distance"],
                                success=rec["success"],
                                object_class=rec["object_class"])
            else:
                try:
                    states.append(rec["s"])
                    p = rec["p"]
                    clouds.append(np.asarray(p["points"],
                                             dtype=np.float64).reshape(p["m"], p["d"]))
                    actions.append(rec["a"])
                except (KeyError, ValueError) as e:
                    raise DatasetError(f"{rel}: bad step record at line {lineno}: {e}") from e
    if meta is None:
        raise DatasetError(f"{rel}: empty trajectory file")
    traj = Trajectory(np.asarray(states, dtype=np.float64), np.stack(clouds),
                      np.asarray(actions, dtype=np.float64), meta,
                      traj_id=rel.rsplit(".", 1)[0])
    traj.validate()
    return traj


def load(root) -> Dataset:
    root = str(root)
    try:
        with open(os.path.join(root, "manifest.json")) as f:
            manifest = json.load(f)
    except FileNotFoundError as e:
        raise DatasetError(f"{root}: missing manifest.json") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetError(
            f"unsupported dataset format version {manifest.get('format_version')}")

    splits = {"train": [], "val": []}
    for rel, expect_hash in sorted(manifest["files"].items()):
        path = os.path.join(root, rel)
        with open(path, "rb") as f:
            payload = f.read()
        digest = hashlib.sha256(payload).hexdigest()
        if digest != expect_hash:
            raise DatasetError(f"{rel}: checksum mismatch")
        splits[rel.split("/", 1)[0]].append(_parse_traj(path, rel))

    counts = manifest["counts"]
    if len(splits["train"]) != counts["train"] or len(splits["val"]) != counts["val"]:
        raise DatasetError("manifest counts disagree with files on disk")
    if abs(counts["train"] - 5 * counts["val"]) > 5:
        raise DatasetError(
            f"train:val ratio must be 5:1, got {counts['train']}:{counts['val']}")
    return Dataset(train=splits["train"], val=splits["val"], manifest=manifest)
