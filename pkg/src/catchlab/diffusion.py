"""Action diffusion with optional point-cloud conditioning.

A cosine-shaped schedule over K denoise steps drives the usual
forward-noising marginal and the posterior reverse step. The denoiser is
an MLP over [flattened action window, sinusoidal step embedding,
conditioning]. Conditioning is a window of normalized proprioceptive
states, optionally concatenated with the pooled cloud feature.

Visual modes:
    none         state conditioning only
    global-feat  cloud feature conditioning, encoder frozen at random init
    u3r          cloud feature conditioning plus the joint reconstruction
                 objective; the encoder trains end to end

Training minimizes lam_noise * E|eps - eps_hat|^2 (mean per element)
plus, in u3r mode, lam_recon times the index-matched cloud
reconstruction loss.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import ContractError, NonFiniteGradientError
from .numkit import (Adam, Mlp, Tensor, backward, concat, init_mlp,
                     load_checkpoint, save_checkpoint, tmean)
from .numkit.tensor import add, mul, sub
from .percept import (PerceptParams, attend, chamfer_loss, encode, encode_np,
                      init_percept, percept_from_meta, perturb, recon_loss,
                      reconstruct)

VISUAL_MODES = ("none", "global-feat", "u3r")


class NoiseSchedule:
    """beta_k for k=1..K with derived alpha and alpha-bar tables.

    alpha_bar(0) == 1 by convention. Validation enforces 0 < beta < 1 and
    strictly decreasing alpha_bar; pass validate=False only to build
    degenerate schedules for tests.
    """

    def __init__(self, betas, validate=True):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 1:
            raise ContractError("schedule needs at least one beta")
        alphas = 1.0 - betas
        alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
        if validate:
            if np.any(betas <= 0.0) or np.any(betas >= 1.0):
                raise ContractError("betas must lie strictly inside (0, 1)")
            if np.any(np.diff(alpha_bars) >= 0.0):
                raise ContractError("alpha-bar must strictly decrease")
        self.betas = betas
        self.alphas = alphas
        self.alpha_bars = alpha_bars

    @property
    def K(self):
        return len(self.betas)

    @staticmethod
    def cosine(K=10, s=0.008, beta_max=0.65):
        """Cosine-shaped alpha-bar. With few steps the raw cosine tail
        sends beta_K -> 1, and the 1/sqrt(alpha_K) factor in the reverse
        step then amplifies noise-prediction error ~30x, blowing up
        sampling; the cap keeps the per-step gain below ~1.7 while
        alpha_bar_K stays < 0.01."""
        ks = np.arange(K + 1, dtype=np.float64)
        f = np.cos((ks / K + s) / (1.0 + s) * np.pi / 2.0) ** 2
        alpha_bars = f / f[0]
        betas = np.clip(1.0 - alpha_bars[1:] / alpha_bars[:-1], 1e-6, beta_max)
        return NoiseSchedule(betas)

    def check_k(self, k):
        if not 1 <= k <= self.K:
            raise ContractError(f"step k={k} outside 1..{self.K}")


def forward_diffuse(x0, k, eps, schedule: NoiseSchedule):
    """Closed-form marginal x_k = sqrt(ab_k) x0 + sqrt(1-ab_k) eps."""
    schedule.check_k(int(np.max(k)) if np.ndim(k) else k)
    if np.ndim(k):
        ab = schedule.alpha_bars[np.asarray(k)]
        ab = ab.reshape(-1, *([1] * (np.ndim(x0) - 1)))
    else:
        ab = schedule.alpha_bars[k]
    return np.sqrt(ab) * np.asarray(x0) + np.sqrt(1.0 - ab) * np.asarray(eps)


def posterior_step(x, k, eps_hat, schedule: NoiseSchedule, z=None):
    """One reverse step given the predicted noise; adds sigma_k z for k > 1."""
    schedule.check_k(k)
    beta = schedule.betas[k - 1]
    alpha = schedule.alphas[k - 1]
    ab_k = schedule.alpha_bars[k]
    ab_prev = schedule.alpha_bars[k - 1]
    denom = np.sqrt(1.0 - ab_k) if ab_k < 1.0 else 1.0
    mean = (x - beta / denom * eps_hat) / np.sqrt(alpha)
    if k > 1 and z is not None and beta > 0.0:
        sigma = np.sqrt((1.0 - ab_prev) / (1.0 - ab_k) * beta)
        return mean + sigma * z
    return mean


def clean_estimate(x, k, eps_hat, schedule: NoiseSchedule):
    """x0 estimate implied by the predicted noise at level k."""
    schedule.check_k(k)
    ab_k = schedule.alpha_bars[k]
    return (x - np.sqrt(1.0 - ab_k) * eps_hat) / np.sqrt(ab_k)


def posterior_from_x0(x, k, x0, schedule: NoiseSchedule, z=None):
    """Reverse step parameterized by the clean estimate; algebraically the
    same posterior as `posterior_step` when x0 = clean_estimate(...)."""
    schedule.check_k(k)
    beta = schedule.betas[k - 1]
    alpha = schedule.alphas[k - 1]
    ab_k = schedule.alpha_bars[k]
    ab_prev = schedule.alpha_bars[k - 1]
    mean = (np.sqrt(ab_prev) * beta * x0
            + np.sqrt(alpha) * (1.0 - ab_prev) * x) / (1.0 - ab_k)
    if k > 1 and z is not None and beta > 0.0:
        sigma = np.sqrt((1.0 - ab_prev) / (1.0 - ab_k) * beta)
        return mean + sigma * z
    return mean


def step_embedding(k, dim=16, K=10):
    """Sinusoidal features of the denoise step index; k may be an array."""
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    half = dim // 2
    freqs = np.pi * (2.0 ** np.arange(half)) / max(K, 1)
    ang = k[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class DenoiserNet:
    """Noise predictor over (action window, step embedding, conditioning)."""

    def __init__(self, mlp: Mlp, x_dim, cond_dim, emb_dim, K):
        self.mlp = mlp
        self.x_dim = x_dim
        self.cond_dim = cond_dim
        self.emb_dim = emb_dim
        self.K = K

    def predict_np(self, x, k, cond):
        x = np.atleast_2d(x)
        cond = np.atleast_2d(cond)
        emb = step_embedding(k, self.emb_dim, self.K)
        if len(emb) == 1 and len(x) > 1:
            emb = np.repeat(emb, len(x), axis=0)
        out = self.mlp.forward_np(np.concatenate([x, emb, cond], axis=1))
        if out.shape != x.shape:
            raise ContractError("denoiser output shape must match input window")
        return out

    def predict(self, x: Tensor, k, cond):
        emb = Tensor(step_embedding(k, self.emb_dim, self.K))
        cond = cond if isinstance(cond, Tensor) else Tensor(np.atleast_2d(cond))
        return self.mlp.forward(concat([x, emb, cond], axis=1))

    def params(self):
        return self.mlp.params()


def init_denoiser(rng, x_dim, cond_dim, hidden=(256, 256), emb_dim=16, K=10):
    mlp = init_mlp([x_dim + emb_dim + cond_dim, *hidden, x_dim], rng)
    return DenoiserNet(mlp, x_dim, cond_dim, emb_dim, K)


@dataclass(frozen=True)
class DpConfig:
    visual_mode: str = "u3r"
    n_obs: int = 2
    horizon: int = 4
    exec_steps: int = 2
    lam_recon: float = 1.0
    lam_noise: float = 1.0
    d_f: int = 64
    K: int = 10
    sigma: float = 0.01
    recon_style: str = "indexed"  # "indexed" (canonical) | "chamfer"
    denoiser_hidden: tuple = (256, 256)
    enc_hidden: tuple = (48,)
    dec_hidden: tuple = (96,)
    train_steps: int = 1500
    batch_size: int = 48
    lr: float = 1e-3
    log_every: int = 100

    def __post_init__(self):
        if self.visual_mode not in VISUAL_MODES:
            raise ContractError(f"visual_mode must be one of {VISUAL_MODES}")
        if not 1 <= self.exec_steps <= self.horizon:
            raise ContractError("need 1 <= exec_steps <= horizon")
        if self.recon_style not in ("indexed", "chamfer"):
            raise ContractError("recon_style must be 'indexed' or 'chamfer'")


@dataclass
class NormStats:
    state_mean: np.ndarray
    state_std: np.ndarray
    action_mean: np.ndarray
    action_std: np.ndarray

    @staticmethod
    def from_manifest(norm):
        return NormStats(np.asarray(norm["state_mean"]), np.asarray(norm["state_std"]),
                         np.asarray(norm["action_mean"]), np.asarray(norm["action_std"]))

    def norm_state(self, s):
        return (s - self.state_mean) / self.state_std

    def norm_action(self, a):
        return (a - self.action_mean) / self.action_std

    def denorm_action(self, a):
        return a * self.action_std + self.action_mean


class DpPolicy:
    """Trained bundle: denoiser + schedule + stats (+ percept when visual)."""

    def __init__(self, net: DenoiserNet, schedule: NoiseSchedule,
                 percept: PerceptParams | None, stats: NormStats,
                 config: DpConfig, state_dim, dof):
        self.net = net
        self.schedule = schedule
        self.percept = percept
        self.stats = stats
        self.config = config
        self.state_dim = state_dim
        self.dof = dof

    @property
    def cond_dim(self):
        base = self.config.n_obs * self.state_dim
        return base + (self.config.d_f if self.config.visual_mode != "none" else 0)

    def build_condition(self, state_window, fg=None):
        """Normalized conditioning vector from raw states (n_obs, s_dim)."""
        window = np.asarray(state_window, dtype=np.float64)
        if window.ndim == 1:
            window = window[None, :]
        if len(window) < self.config.n_obs:
            pad = np.repeat(window[:1], self.config.n_obs - len(window), axis=0)
            window = np.concatenate([pad, window], axis=0)
        window = window[-self.config.n_obs:]
        parts = [self.stats.norm_state(window).reshape(-1)]
        if self.config.visual_mode != "none":
            if fg is None:
                raise ContractError("visual mode requires a cloud feature")
            parts.append(np.asarray(fg, dtype=np.float64))
        return np.concatenate(parts)

    def cloud_feature(self, obj, rng, m_points=None):
        from .percept import encoded_cloud_features
        if self.config.visual_mode == "none":
            return None, None
        return encoded_cloud_features(obj, self.percept, rng, m_points)

    def save(self, path):
        arrays = self.net.mlp.state_dict("denoiser/")
        if self.percept is not None:
            arrays.update(self.percept.state_dict("percept/"))
        meta = {
            "kind": "dp-policy",
            "config": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in self.config.__dict__.items()},
            "betas": self.schedule.betas.tolist(),
            "state_dim": self.state_dim,
            "dof": self.dof,
            "stats": {"state_mean": self.stats.state_mean.tolist(),
                      "state_std": self.stats.state_std.tolist(),
                      "action_mean": self.stats.action_mean.tolist(),
                      "action_std": self.stats.action_std.tolist()},
            "percept": self.percept.meta() if self.percept else None,
        }
        save_checkpoint(path, arrays, meta)

    @staticmethod
    def load(path):
        arrays, meta = load_checkpoint(path)
        if not meta or meta.get("kind") != "dp-policy":
            raise ContractError(f"{path} is not a diffusion policy checkpoint")
        cfgd = dict(meta["config"])
        for key in ("denoiser_hidden", "enc_hidden", "dec_hidden"):
            cfgd[key] = tuple(cfgd[key])
        config = DpConfig(**cfgd)
        schedule = NoiseSchedule(meta["betas"])
        stats = NormStats.from_manifest(meta["stats"])
        rng = np.random.default_rng(0)
        x_dim = config.horizon * meta["dof"]
        cond_dim = config.n_obs * meta["state_dim"] + (
            config.d_f if config.visual_mode != "none" else 0)
        net = init_denoiser(rng, x_dim, cond_dim, hidden=config.denoiser_hidden,
                            K=config.K)
        net.mlp.load_state(arrays, "denoiser/")
        percept = None
        if meta["percept"] is not None:
            percept = percept_from_meta(meta["percept"])
            percept.load_state(arrays, "percept/")
        return DpPolicy(net, schedule, percept, stats, config,
                        meta["state_dim"], meta["dof"])


def noise_loss(x0_batch, cond_batch, net: DenoiserNet, schedule: NoiseSchedule,
               rng, cond_tensor=None):
    """Mean per-element squared noise prediction error over a batch."""
    x0 = np.atleast_2d(np.asarray(x0_batch, dtype=np.float64))
    if len(x0) == 0:
        raise ContractError("noise_loss needs a nonempty batch")
    ks = rng.integers(1, schedule.K + 1, size=len(x0))
    eps = rng.standard_normal(x0.shape)
    xk = forward_diffuse(x0, ks, eps, schedule)
    cond = cond_tensor if cond_tensor is not None else Tensor(np.atleast_2d(cond_batch))
    eps_hat = net.predict(Tensor(xk), ks, cond)
    diff = sub(eps_hat, Tensor(eps))
    return tmean(mul(diff, diff))


def total_loss(recon_component, noise_component, lam_recon, lam_noise):
    """Weighted sum of the reconstruction and noise objectives."""
    def as_t(v):
        return v if isinstance(v, Tensor) else Tensor(v)
    return add(mul(as_t(recon_component), lam_recon),
               mul(as_t(noise_component), lam_noise))


X0_CLIP = 5.0  # clean-estimate clamp, in normalized action units


def reverse_denoise(net, schedule, cond, rng, step_hook=None):
    """Full reverse pass from x_K ~ N(0, I) in normalized action space.

    Each iteration derives the clean-action estimate from the predicted
    noise; `step_hook(x0_hat, completed)` may transform that estimate
    before it forms the posterior (completed counts finished iterations,
    1..K). Guidance therefore steers the denoising target while the
    sample keeps the noise statistics the net was trained on; a None hook
    is the identity, so guided and unguided passes share one code path.
    """
    x = rng.standard_normal(net.x_dim)
    cond = np.asarray(cond, dtype=np.float64)[None, :]
    completed = 0
    for k in range(schedule.K, 0, -1):
        eps_hat = net.predict_np(x[None, :], np.array([k]), cond)[0]
        x0_hat = np.clip(clean_estimate(x, k, eps_hat, schedule),
                         -X0_CLIP, X0_CLIP)
        completed += 1
        if step_hook is not None:
            x0_hat = step_hook(x0_hat, completed)
        z = rng.standard_normal(net.x_dim) if k > 1 else None
        x = posterior_from_x0(x, k, x0_hat, schedule, z)
    return x


def infer_action(policy: DpPolicy, cond, rng, step_hook=None):
    """Denoise an action window; returns (horizon, dof) in env action space."""
    x = reverse_denoise(policy.net, policy.schedule, cond, rng, step_hook)
    window = policy.stats.denorm_action(
        x.reshape(policy.config.horizon, policy.dof))
    return np.clip(window, -1.0, 1.0)


class _WindowSampler:
    """Sampler over (trajectory, start index) windows.

    Episode-start windows (t < n_obs, where the observation window is
    padded) are oversampled: every live rollout begins there, but they
    are a sliver of a uniform index, and an underfit start region makes
    the first inference of every episode unreliable.
    """

    def __init__(self, trajs, n_obs, horizon, start_boost=8):
        self.trajs = trajs
        self.n_obs = n_obs
        self.horizon = horizon
        self.index = []
        for ti, traj in enumerate(trajs):
            for t in range(len(traj)):
                copies = start_boost if t < n_obs else 1
                self.index.extend([(ti, t)] * copies)

    def batch(self, rng, size):
        picks = rng.integers(0, len(self.index), size=size)
        return [self.index[i] for i in picks]

    def window(self, ti, t):
        traj = self.trajs[ti]
        lo = max(0, t - self.n_obs + 1)
        states = traj.states[lo:t + 1]
        if len(states) < self.n_obs:
            states = np.concatenate(
                [np.repeat(states[:1], self.n_obs - len(states), axis=0), states])
        idx = np.minimum(np.arange(t, t + self.horizon), len(traj) - 1)
        actions = traj.actions[idx]
        return states, actions, traj.clouds[t]


def _build_policy(dataset: Dataset, config: DpConfig, rng):
    state_dim = dataset.train[0].states.shape[1]
    dof = dataset.train[0].actions.shape[1]
    m_points = dataset.train[0].clouds.shape[1]
    d = dataset.train[0].clouds.shape[2]
    stats = NormStats.from_manifest(dataset.normalization())
    schedule = NoiseSchedule.cosine(config.K)
    percept = None
    if config.visual_mode != "none":
        percept = init_percept(rng, d=d, d_f=config.d_f, m_points=m_points,
                               enc_hidden=config.enc_hidden,
                               dec_hidden=config.dec_hidden, sigma=config.sigma)
    cond_dim = config.n_obs * state_dim + (config.d_f if percept else 0)
    net = init_denoiser(rng, config.horizon * dof, cond_dim,
                        hidden=config.denoiser_hidden, K=config.K)
    return DpPolicy(net, schedule, percept, stats, config, state_dim, dof)


def train_dp(dataset: Dataset, config: DpConfig, seed, out_dir=None):
    """Train a diffusion policy on a dataset. Returns (policy, history).

    History rows: {step, loss, noise, recon}. Aborts on non-finite loss,
    keeping the last good parameters.
    """
    rng = np.random.default_rng(seed)
    policy = _build_policy(dataset, config, rng)
    sampler = _WindowSampler(dataset.train, config.n_obs, config.horizon)

    trainable = list(policy.net.params())
    joint_percept = config.visual_mode == "u3r"
    if joint_percept:
        trainable += policy.percept.params()
    opt = Adam(trainable, lr=config.lr)

    history = []
    for step_i in range(config.train_steps):
        picks = sampler.batch(rng, config.batch_size)
        states, actions, clouds = zip(*(sampler.window(ti, t) for ti, t in picks))
        x0 = np.stack([policy.stats.norm_action(a).reshape(-1) for a in actions])
        cond_state = np.stack([policy.stats.norm_state(s).reshape(-1)
                               for s in states])

        recon_term = None
        if config.visual_mode == "none":
            cond = Tensor(cond_state)
        else:
            batch_clouds = np.stack(clouds)
            noisy = perturb(batch_clouds, config.sigma, rng)
            if joint_percept:
                feats, fg = encode(noisy, policy.percept)
                z, _ = attend(feats, fg, policy.percept)
                recon_fn = (chamfer_loss if config.recon_style == "chamfer"
                            else recon_loss)
                recon_term = recon_fn(batch_clouds,
                                      reconstruct(z, policy.percept))
            else:
                fg = Tensor(encode_np(noisy, policy.percept))
            cond = concat([Tensor(cond_state), fg], axis=1)

        n_loss = noise_loss(x0, None, policy.net, policy.schedule, rng,
                            cond_tensor=cond)
        loss = (total_loss(recon_term, n_loss, config.lam_recon, config.lam_noise)
                if recon_term is not None else n_loss)
        if not np.isfinite(loss.data):
            history.append({"step": step_i, "loss": float("nan"),
                            "aborted": True})
            break
        opt.zero_grad()
        backward(loss)
        try:
            opt.step()
        except NonFiniteGradientError:
            history.append({"step": step_i, "loss": float(loss.data),
                            "aborted": True})
            break
        if step_i % config.log_every == 0 or step_i == config.train_steps - 1:
            history.append({
                "step": step_i,
                "loss": float(loss.data),
                "noise": float(n_loss.data),
                "recon": float(recon_term.data) if recon_term is not None else 0.0,
            })

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        policy.save(os.path.join(out_dir, "dp_policy.ckpt"))
        with open(os.path.join(out_dir, "dp_loss.csv"), "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["step", "loss", "noise",
                                                   "recon", "aborted"])
            writer.writeheader()
            for row in history:
                writer.writerow({k: row.get(k, "") for k in writer.fieldnames})
    return policy, history


def eval_mse(policy: DpPolicy, val_trajs, eval_seed=1234, windows_per_traj=8):
    """Noise-prediction MSE on held-out trajectories, per class and overall.

    Evaluation draws (window, k, eps) from a dedicated seeded stream so
    checkpoints can be compared on identical probes.
    """
    if not val_trajs:
        raise ContractError("eval_mse needs a nonempty validation split")
    rng = np.random.default_rng(eval_seed)
    cfg = policy.config
    per_class = {}
    for traj in val_trajs:
        sampler = _WindowSampler([traj], cfg.n_obs, cfg.horizon)
        errs = []
        for _ in range(windows_per_traj):
            t = int(rng.integers(0, len(traj)))
            states, actions, cloud = sampler.window(0, t)
            x0 = policy.stats.norm_action(actions).reshape(-1)
            k = int(rng.integers(1, policy.schedule.K + 1))
            eps = rng.standard_normal(x0.shape)
            xk = forward_diffuse(x0, k, eps, policy.schedule)
            if cfg.visual_mode == "none":
                fg = None
            else:
                noisy = perturb(cloud, cfg.sigma, rng)
                fg = encode_np(noisy, policy.percept)
            cond = policy.build_condition(states, fg)
            eps_hat = policy.net.predict_np(xk[None, :], np.array([k]),
                                            cond[None, :])[0]
            errs.append(float(((eps - eps_hat) ** 2).mean()))
        per_class.setdefault(traj.meta.object_class, []).extend(errs)

    out = {cls: float(np.mean(v)) for cls, v in sorted(per_class.items())}
    out["overall"] = float(np.mean([e for v in per_class.values() for e in v]))
    return out
