"""Episode-level environment wrapper and observation builders.

`CatchEnv` owns one RNG stream and runs episodes with auto-termination
on success, drop, or timeout. `VecCatchEnv` fans a master seed out to
independent per-env streams (SeedSequence spawn), so parallel rollouts
are reproducible regardless of scheduling.

Two observation views exist on purpose:
  * `policy_observation` is the privileged RL view (includes the goal
    orientation and a geometry summary of the object).
  * `proprio_state` is the leaner view stored in trajectory datasets:
    object pose/velocity plus hand proprioception. Geometry reaches the
    imitation policy only through point clouds.
"""
from __future__ import annotations

import numpy as np

from .config import WorldConfig
from .reward import check_success, compute_reward
from .shapes import shape_features
from .world import SimState, reset, step

OMEGA_SCALE = 0.1
QD_SCALE = 0.05


def proprio_state(state: SimState) -> np.ndarray:
    obj, hand = state.object, state.hand
    return np.concatenate([
        obj.position,
        obj.velocity,
        [np.cos(obj.theta), np.sin(obj.theta), OMEGA_SCALE * obj.omega],
        hand.q,
        QD_SCALE * hand.qd,
        hand.tips.reshape(-1),
    ])


def proprio_dim(config: WorldConfig) -> int:
    return 7 + 2 * config.dof + 2 * config.fingers


def policy_observation(state: SimState, config: WorldConfig) -> np.ndarray:
    obj, hand = state.object, state.hand
    rel = obj.position - hand.q[:2]
    return np.concatenate([
        proprio_state(state),
        rel,
        [np.cos(obj.target_theta), np.sin(obj.target_theta)],
        shape_features(obj.shape),
    ])


def policy_obs_dim(config: WorldConfig) -> int:
    return proprio_dim(config) + 7


class CatchEnv:
    def __init__(self, config: WorldConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.state = None
        self.episode_params = None
        self.episode_return = 0.0

    def reset(self) -> SimState:
        self.state, self.episode_params = reset(self.config, self.rng)
        self.episode_return = 0.0
        return self.state

    def step(self, action):
        """Returns (state, reward, breakdown, done, info)."""
        prev_dropped = self.state.dropped
        self.state = step(self.state, action, self.config)
        dropped_now = self.state.dropped and not prev_dropped
        total, rbd = compute_reward(self.state, action, dropped_now, self.config)
        success = check_success(self.state, self.config)
        done = (success or self.state.dropped
                or self.state.t >= self.config.episode_length)
        self.episode_return += total
        info = {"success": success, "dropped_now": dropped_now,
                "episode_return": self.episode_return}
        return self.state, total, rbd, done, info


class VecCatchEnv:
    def __init__(self, config: WorldConfig, n_envs: int, master_seed: int):
        streams = np.random.SeedSequence(master_seed).spawn(n_envs)
        self.envs = [CatchEnv(config, np.random.default_rng(s)) for s in streams]
        self.config = config

    def __len__(self):
        return len(self.envs)

    def reset_all(self):
        return [env.reset() for env in self.envs]

    def observations(self):
        return np.stack([policy_observation(e.state, self.config) for e in self.envs])
