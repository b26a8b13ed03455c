"""PPO trainer for the expert catching policy.

Continuous Gaussian policy with a state-independent learnable log-std,
generalized advantage estimation, the clipped surrogate objective, and a
KL-adaptive learning rate: measured KL above twice the target halves the
rate, below half the target raises it 1.5x, always clamped to
[lr_min, lr_max]; a KL blowup past 10x the target aborts the remaining
epochs of that update.

Two named profiles ship: "desk" (64 envs, [128, 128] nets) for CPU runs
and "paper" (8192 envs, [1024, 1024, 512] nets, 6500 iterations)
mirroring the reference hyperparameter table.
"""
from __future__ import annotations

import csv
import os
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NonFiniteGradientError
from .numkit import (Adam, Mlp, Tensor, backward, clamp, clip_grad_norm, exp,
                     init_mlp, load_checkpoint, minimum, mul, reshape,
                     save_checkpoint, sub, tmean, tsum)
from .numkit.tensor import add
from .sim import (VecCatchEnv, WorldConfig, policy_obs_dim,
                  policy_observation)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.96
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    entropy_coef: float = 0.0
    target_kl: float = 0.016
    epochs: int = 5
    minibatches: int = 4
    rollout_steps: int = 8
    max_grad_norm: float = 1.0
    lr: float = 3e-4
    lr_min: float = 1e-6
    lr_max: float = 1e-2
    value_coef: float = 0.5
    obs_clip: float = 5.0
    action_clip: float = 1.0
    init_noise_std: float = 0.8
    n_envs: int = 64
    hidden: tuple = (128, 128)
    max_iterations: int = 200
    save_interval: int = 1000
    seed: int = 22

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ContractError("gamma must be in (0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ContractError("gae lambda must be in [0, 1]")
        if self.clip_ratio <= 0:
            raise ContractError("clip ratio must be > 0")


def ppo_profile(name: str) -> PpoConfig:
    """Named profiles; "paper" mirrors the reference table, "desk" trades
    env count for longer rollouts so updates still see whole episodes."""
    if name == "desk":
        return PpoConfig(n_envs=64, hidden=(128, 128), rollout_steps=32)
    if name == "paper":
        return PpoConfig(n_envs=8192, hidden=(1024, 1024, 512),
                         rollout_steps=8, max_iterations=6500)
    raise ContractError(f"unknown PPO profile {name!r}")


class ActorCritic:
    def __init__(self, actor: Mlp, log_std: Tensor, critic: Mlp):
        self.actor = actor
        self.log_std = log_std
        self.critic = critic

    @property
    def act_dim(self):
        return self.actor.out_dim

    def params(self):
        return self.actor.params() + [self.log_std] + self.critic.params()

    def act_np(self, obs, rng=None):
        """Returns (executed action, raw sample, log-prob of the sample, value).

        The executed action is clipped to [-1, 1]; the probability ratio in
        the update must use the raw sample, otherwise the Gaussian density
        of boundary-pinned actions explodes once the mean leaves the box.
        """
        obs = np.atleast_2d(obs)
        mean = self.actor.forward_np(obs)
        if rng is None:
            raw = mean.copy()
        else:
            std = np.exp(self.log_std.data)
            raw = mean + std * rng.standard_normal(mean.shape)
        action = np.clip(raw, -1.0, 1.0)
        logp = gaussian_logp_np(raw, mean, self.log_std.data)
        value = self.critic.forward_np(obs)[:, 0]
        return action, raw, logp, value

    def state_dict(self):
        out = self.actor.state_dict("actor/")
        out["log_std"] = self.log_std.data
        out.update(self.critic.state_dict("critic/"))
        return out

    def save(self, path, extra_meta=None):
        meta = {"kind": "actor-critic", "obs_dim": self.actor.in_dim,
                "act_dim": self.act_dim,
                "hidden": [w.shape[0] for w in self.actor.weights[:-1]]}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.state_dict(), meta)

    @staticmethod
    def load(path):
        arrays, meta = load_checkpoint(path)
        if not meta or meta.get("kind") != "actor-critic":
            raise ContractError(f"{path} is not an actor-critic checkpoint")
        policy = init_actor_critic(meta["obs_dim"], meta["act_dim"],
                                   tuple(meta["hidden"]),
                                   np.random.default_rng(0))
        policy.actor.load_state(arrays, "actor/")
        policy.critic.load_state(arrays, "critic/")
        policy.log_std.data = np.asarray(arrays["log_std"]).reshape(
            policy.log_std.shape)
        return policy


def init_actor_critic(obs_dim, act_dim, hidden, rng, init_noise_std=0.8):
    actor = init_mlp([obs_dim, *hidden, act_dim], rng)
    critic = init_mlp([obs_dim, *hidden, 1], rng)
    log_std = Tensor(np.full(act_dim, np.log(init_noise_std)), requires_grad=True)
    return ActorCritic(actor, log_std, critic)


def gaussian_logp_np(actions, mean, log_std):
    """Diagonal Gaussian log density, batched."""
    z = (actions - mean) * np.exp(-log_std)
    return (-0.5 * (z * z).sum(axis=-1) - log_std.sum()
            - 0.5 * len(log_std) * LOG_2PI)


@dataclass
class RolloutBuffer:
    obs: np.ndarray          # (T, N, obs_dim)
    actions: np.ndarray      # (T, N, act_dim) executed (clipped) actions
    raw_actions: np.ndarray  # (T, N, act_dim) pre-clip policy samples
    log_probs: np.ndarray    # (T, N)
    rewards: np.ndarray      # (T, N)
    values: np.ndarray       # (T, N)
    dones: np.ndarray        # (T, N) episode ended after this transition
    last_values: np.ndarray  # (N,)
    term_sums: dict
    episode_returns: list
    episode_successes: list
    advantages: np.ndarray = None
    returns: np.ndarray = None

    def __len__(self):
        return self.rewards.size


def collect_rollout(policy: ActorCritic, venv: VecCatchEnv, steps,
                    rng: np.random.Generator, config: PpoConfig):
    n = len(venv)
    cfg = venv.config
    obs_dim = policy.actor.in_dim
    act_dim = policy.act_dim

    obs_buf = np.empty((steps, n, obs_dim))
    act_buf = np.empty((steps, n, act_dim))
    raw_buf = np.empty((steps, n, act_dim))
    logp_buf = np.empty((steps, n))
    rew_buf = np.empty((steps, n))
    val_buf = np.empty((steps, n))
    done_buf = np.zeros((steps, n))
    term_sums = {}
    ep_returns, ep_successes = [], []

    for t in range(steps):
        obs = np.clip(venv.observations(), -config.obs_clip, config.obs_clip)
        actions, raw, logps, values = policy.act_np(obs, rng)
        actions = np.clip(actions, -config.action_clip, config.action_clip)
        for i, env in enumerate(venv.envs):
            try:
                _, r, rbd, done, info = env.step(actions[i])
            except Exception as e:
                raise RuntimeError(f"env {i} fault at rollout step {t}: {e}") from e
            rew_buf[t, i] = r
            done_buf[t, i] = float(done)
            for name, value in rbd.to_dict().items():
                term_sums[name] = term_sums.get(name, 0.0) + value
            if done:
                ep_returns.append(info["episode_return"])
                ep_successes.append(float(info["success"]))
                env.reset()
        obs_buf[t] = obs
        act_buf[t] = actions
        raw_buf[t] = raw
        logp_buf[t] = logps
        val_buf[t] = values

    final_obs = np.clip(venv.observations(), -config.obs_clip, config.obs_clip)
    last_values = policy.critic.forward_np(final_obs)[:, 0]
    return RolloutBuffer(obs_buf, act_buf, raw_buf, logp_buf, rew_buf, val_buf,
                         done_buf, last_values, term_sums, ep_returns,
                         ep_successes)


def gae(rewards, values, dones, gamma, lam, last_values):
    """Standard GAE recursion; returns (advantages, returns)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = len(rewards)
    adv = np.zeros_like(rewards)
    running = np.zeros_like(np.atleast_1d(last_values), dtype=np.float64)
    next_values = np.asarray(last_values, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * not_done - values[t]
        running = delta + gamma * lam * not_done * running
        adv[t] = running
        next_values = values[t]
    return adv, adv + values


def surrogate(ratio: Tensor, adv: Tensor, clip_ratio: float) -> Tensor:
    """Per-sample clipped objective min(r A, clip(r, 1-e, 1+e) A)."""
    return minimum(mul(ratio, adv),
                   mul(clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio), adv))


class PpoOptimizer:
    """Actor and critic Adams sharing one adaptive learning rate.

    Gradient clipping applies per network so early, large value errors
    cannot starve the policy gradient through a shared global norm.
    """

    def __init__(self, policy: ActorCritic, lr):
        self.actor_opt = Adam(policy.actor.params() + [policy.log_std], lr=lr)
        self.critic_opt = Adam(policy.critic.params(), lr=lr)

    @property
    def lr(self):
        return self.actor_opt.lr

    @lr.setter
    def lr(self, value):
        self.actor_opt.lr = value
        self.critic_opt.lr = value

    def zero_grad(self):
        self.actor_opt.zero_grad()
        self.critic_opt.zero_grad()

    def step(self, max_grad_norm):
        clip_grad_norm(self.actor_opt.params, max_grad_norm)
        clip_grad_norm(self.critic_opt.params, max_grad_norm)
        self.actor_opt.step()
        self.critic_opt.step()


def ppo_update(buffer: RolloutBuffer, policy: ActorCritic, config: PpoConfig,
               opt: PpoOptimizer, rng: np.random.Generator):
    """Clipped-surrogate update over the assembled buffer; returns stats."""
    T, n, obs_dim = buffer.obs.shape
    obs = buffer.obs.reshape(T * n, obs_dim)
    actions = buffer.raw_actions.reshape(T * n, -1)
    logp_old = buffer.log_probs.reshape(-1)
    adv = buffer.advantages.reshape(-1).copy()
    returns = buffer.returns.reshape(-1)

    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    batch = len(obs)
    mb_size = batch // config.minibatches
    stats = {"kl": 0.0, "clip_frac": 0.0, "policy_loss": 0.0, "value_loss": 0.0,
             "aborted": False}
    last_epoch_kls = []
    for epoch in range(config.epochs):
        perm = rng.permutation(batch)
        epoch_kls = []
        for mb in range(config.minibatches):
            idx = perm[mb * mb_size:(mb + 1) * mb_size]
            obs_t = Tensor(obs[idx])
            act_t = Tensor(actions[idx])
            adv_t = Tensor(adv[idx])
            old_t = Tensor(logp_old[idx])

            mean = policy.actor.forward(obs_t)
            inv_std = exp(mul(policy.log_std, -1.0))
            z = mul(sub(act_t, mean), inv_std)
            logp = add(add(mul(tsum(mul(z, z), axis=1), -0.5),
                           mul(tsum(policy.log_std), -1.0)),
                       -0.5 * policy.act_dim * LOG_2PI)
            ratio = exp(sub(logp, old_t))
            surr = surrogate(ratio, adv_t, config.clip_ratio)
            policy_loss = mul(tmean(surr), -1.0)

            value = reshape(policy.critic.forward(obs_t), (len(idx),))
            verr = sub(value, Tensor(returns[idx]))
            value_loss = tmean(mul(verr, verr))

            loss = add(policy_loss, mul(value_loss, config.value_coef))
            if not np.isfinite(loss.data):
                stats["aborted"] = True
                opt.lr = max(opt.lr * 0.5, config.lr_min)
                return stats

            opt.zero_grad()
            backward(loss)
            try:
                opt.step(config.max_grad_norm)
            except NonFiniteGradientError:
                stats["aborted"] = True
                opt.lr = max(opt.lr * 0.5, config.lr_min)
                return stats

            kl = float(np.mean(logp_old[idx] - logp.data))
            epoch_kls.append(kl)
            stats["policy_loss"] = float(policy_loss.data)
            stats["value_loss"] = float(value_loss.data)
            stats["clip_frac"] = float(
                np.mean(np.abs(ratio.data - 1.0) > config.clip_ratio))
        last_epoch_kls = epoch_kls
        epoch_kl = float(np.mean(epoch_kls))
        if epoch_kl > 10.0 * config.target_kl:
            stats["aborted"] = True
            opt.lr = max(opt.lr * 0.5, config.lr_min)
            stats["kl"] = epoch_kl
            return stats

    measured = float(np.mean(last_epoch_kls))
    stats["kl"] = measured
    if measured > 2.0 * config.target_kl:
        opt.lr = max(opt.lr * 0.5, config.lr_min)
    elif measured < 0.5 * config.target_kl:
        opt.lr = min(opt.lr * 1.5, config.lr_max)
    return stats


METRIC_FIELDS = ["iteration", "mean_ep_return", "success_rate", "episodes",
                 "r_dist", "r_rot", "r_ftip_dist", "p_ftip_linvel",
                 "p_ftip_angvel", "p_action", "p_torque", "p_work", "p_drop",
                 "total", "kl", "clip_frac", "lr"]


def train_rl(world_config: WorldConfig, config: PpoConfig, seed,
             out_dir=None):
    """Full PPO loop. Returns (policy, metrics rows)."""
    rng = np.random.default_rng(seed)
    venv = VecCatchEnv(world_config, config.n_envs, master_seed=seed)
    venv.reset_all()
    obs_dim = policy_obs_dim(world_config)
    policy = init_actor_critic(obs_dim, world_config.dof, config.hidden, rng,
                               config.init_noise_std)
    opt = PpoOptimizer(policy, lr=config.lr)

    recent_returns = deque(maxlen=100)
    recent_success = deque(maxlen=100)
    metrics = []
    ckpt_path = os.path.join(out_dir, "ppo_policy.ckpt") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for it in range(config.max_iterations):
        buffer = collect_rollout(policy, venv, config.rollout_steps, rng, config)
        buffer.advantages, buffer.returns = gae(
            buffer.rewards, buffer.values, buffer.dones, config.gamma,
            config.gae_lambda, buffer.last_values)
        stats = ppo_update(buffer, policy, config, opt, rng)

        recent_returns.extend(buffer.episode_returns)
        recent_success.extend(buffer.episode_successes)
        n_steps = len(buffer)
        row = {"iteration": it,
               "mean_ep_return": float(np.mean(recent_returns)) if recent_returns else float("nan"),
               "success_rate": float(np.mean(recent_success)) if recent_success else float("nan"),
               "episodes": len(buffer.episode_returns),
               "total": buffer.term_sums.get("total", 0.0) / n_steps,
               "kl": stats["kl"], "clip_frac": stats["clip_frac"],
               "lr": opt.lr}
        for name in ("r_dist", "r_rot", "r_ftip_dist", "p_ftip_linvel",
                     "p_ftip_angvel", "p_action", "p_torque", "p_work",
                     "p_drop"):
            row[name] = buffer.term_sums.get(name, 0.0) / n_steps
        metrics.append(row)

        if ckpt_path and ((it + 1) % config.save_interval == 0
                          or it == config.max_iterations - 1):
            policy.save(ckpt_path, {"iteration": it, "seed": seed})

    if out_dir:
        policy.save(ckpt_path, {"iteration": config.max_iterations, "seed": seed})
        with open(os.path.join(out_dir, "ppo_metrics.csv"), "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=METRIC_FIELDS)
            writer.writeheader()
            writer.writerows(metrics)
    return policy, metrics


def evaluate_policy(policy: ActorCritic, world_config: WorldConfig, episodes,
                    seed, deterministic=True, obs_clip=5.0):
    """Success rate and mean return under the (default: mean) policy."""
    from .sim import CatchEnv
    ss = np.random.SeedSequence(seed)
    rng_act = np.random.default_rng(ss.spawn(1)[0]) if not deterministic else None
    succ, rets = [], []
    for child in ss.spawn(episodes):
        env = CatchEnv(world_config, np.random.default_rng(child))
        state = env.reset()
        done = False
        while not done:
            obs = np.clip(policy_observation(state, world_config),
                          -obs_clip, obs_clip)
            action, _, _, _ = policy.act_np(obs, rng_act)
            state, _, _, done, info = env.step(action[0])
        succ.append(float(info["success"]))
        rets.append(info["episode_return"])
    return {"success_rate": float(np.mean(succ)),
            "mean_return": float(np.mean(rets)), "episodes": episodes}
