"""Dynamics-gated blending of teleoperation into diffusion inference.

The dynamic factor u = beta_v |v|/v0 + beta_w |w|/w0 summarizes object
motion; the intervention ceiling alpha_max = sigmoid(u0 - u) shrinks as
the object moves faster. Within one inference, teleop authority follows
the cosine ramp alpha(k) = alpha_max (1 - cos(pi k / 2K)) where k counts
completed denoise iterations, so guidance grows smoothly from 0 at the
noisiest sample to alpha_max on the executed one.

Blending acts in normalized action space on the clean-action estimate
that each completed iteration feeds into its posterior: steering the
denoising target preserves the per-level noise statistics the denoiser
was trained on (pulling the noisy sample itself toward a clean reference
destabilizes the chain). With alpha_max = 0 the pass is bit-identical to
unguided inference under the same generator state.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..diffusion import DpPolicy, reverse_denoise
from ..errors import ContractError


@dataclass(frozen=True)
class DaimConfig:
    beta_v: float = 10.0
    beta_omega: float = 0.1
    u0: float = 1.0
    v0: float = 1.0       # m/s
    omega0: float = 10.0  # rad/s

    def __post_init__(self):
        if self.v0 <= 0 or self.omega0 <= 0:
            raise ContractError("v0 and omega0 must be > 0")
        if self.beta_v < 0 or self.beta_omega < 0:
            raise ContractError("beta weights must be >= 0")


def dynamic_factor(v, omega, cfg: DaimConfig) -> float:
    """u = beta_v |v|/v0 + beta_w |w|/w0."""
    v_norm = float(np.linalg.norm(np.atleast_1d(v)))
    w_norm = float(np.linalg.norm(np.atleast_1d(omega)))
    if not (np.isfinite(v_norm) and np.isfinite(w_norm)):
        raise ContractError("velocities must be finite")
    return cfg.beta_v * v_norm / cfg.v0 + cfg.beta_omega * w_norm / cfg.omega0


def sigmoid(x):
    x = float(x)
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def alpha_max(u, cfg: DaimConfig) -> float:
    return sigmoid(cfg.u0 - u)


def alpha_schedule(k, K, a_max) -> float:
    if K < 1:
        raise ContractError("K must be >= 1")
    if not 0 <= k <= K:
        raise ContractError(f"k={k} outside 0..{K}")
    return a_max * (1.0 - np.cos(np.pi * k / (2.0 * K)))


def blend(x_hat, x_ref, alpha):
    """Convex combination x_hat + alpha (x_ref - x_hat)."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha={alpha} outside [0, 1]")
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if alpha == 0.0:
        return x_hat.copy()
    return x_hat + alpha * (np.asarray(x_ref, dtype=np.float64) - x_hat)


@dataclass
class BlendTrace:
    u: float
    alpha_max: float
    alphas: list          # K+1 values, k = 0..K
    v_norm: float
    omega_norm: float
    x_ref: np.ndarray     # reference action (dof,)
    x_policy: np.ndarray  # first executed action of the unguided pass
    x_exec: np.ndarray    # first executed action of the guided pass

    def to_dict(self):
        return {"u": self.u, "alpha_max": self.alpha_max,
                "alphas": list(map(float, self.alphas)),
                "x_ref": self.x_ref.tolist(),
                "x_policy": self.x_policy.tolist(),
                "x_exec": self.x_exec.tolist()}


def guided_denoise(policy: DpPolicy, cond, x_ref, object_dynamics,
                   cfg: DaimConfig, rng, alpha_max_override=None):
    """Run K denoise iterations, blending teleop in after each one.

    After completed iteration count k the running clean-action estimate
    is pulled toward the reference with weight alpha(k), so teleop
    authority ramps from 0 on the noisiest sample to alpha_max on the
    executed one. `object_dynamics` is the current (v, omega) of the
    object; u and alpha_max are computed once per control step. Returns
    the executed action window (horizon, dof) plus the BlendTrace.
    """
    v, omega = object_dynamics
    u = dynamic_factor(v, omega, cfg)
    a_max = alpha_max(u, cfg) if alpha_max_override is None else alpha_max_override
    K = policy.schedule.K

    x_ref = np.clip(np.asarray(x_ref, dtype=np.float64), -1.0, 1.0)
    ref_window = np.tile(x_ref, policy.config.horizon)
    ref_norm = policy.stats.norm_action(
        ref_window.reshape(policy.config.horizon, policy.dof)).reshape(-1)

    rng_pure = copy.deepcopy(rng)

    def hook(x, completed):
        return blend(x, ref_norm, alpha_schedule(completed, K, a_max))

    guided = reverse_denoise(policy.net, policy.schedule, cond, rng, hook)
    pure = reverse_denoise(policy.net, policy.schedule, cond, rng_pure, None)

    def to_window(flat):
        win = policy.stats.denorm_action(
            flat.reshape(policy.config.horizon, policy.dof))
        return np.clip(win, -1.0, 1.0)

    exec_window = to_window(guided)
    pure_window = to_window(pure)
    trace = BlendTrace(
        u=u, alpha_max=a_max,
        alphas=[alpha_schedule(k, K, a_max) for k in range(K + 1)],
        v_norm=float(np.linalg.norm(np.atleast_1d(v))),
        omega_norm=float(np.linalg.norm(np.atleast_1d(omega))),
        x_ref=x_ref.copy(), x_policy=pure_window[0].copy(),
        x_exec=exec_window[0].copy())
    return exec_window, trace
