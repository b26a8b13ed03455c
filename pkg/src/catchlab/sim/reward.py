"""Composite catching reward.

Total = lam_dist*R_dist + lam_rot*R_rot + lam_ftip*R_ftip_dist
        - lam_drop*P_drop - lam_lin*P_ftip_linvel - lam_ang*P_ftip_angvel
        - lam_act*P_action - lam_torque*P_torque - lam_power*P_work

Reward terms are negative distances, penalty terms are non-negative, so
the total is always <= 0 for finite states. The drop penalty contributes
exactly -lam_drop * 100 and fires once per episode (the caller guards it
with the monotone dropped flag). Orientation error is the smallest
wrapped angle in [0, pi].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import WorldConfig
from .world import SimState

LAM_DIST = 10.0
LAM_ROT = 0.1
LAM_FTIP_DIST = 10.0
LAM_LIN = 0.3
LAM_ANG = 0.03
LAM_ACT = 2e-4
LAM_TORQUE = 2e-4
LAM_POWER = 2e-4
LAM_DROP = 1.0
DROP_PENALTY = 100.0


@dataclass
class RewardBreakdown:
    r_dist: float
    r_rot: float
    r_ftip_dist: float
    p_ftip_linvel: float
    p_ftip_angvel: float
    p_action: float
    p_torque: float
    p_work: float
    p_drop: float
    total: float

    def to_dict(self):
        return {"r_dist": self.r_dist, "r_rot": self.r_rot,
                "r_ftip_dist": self.r_ftip_dist,
                "p_ftip_linvel": self.p_ftip_linvel,
                "p_ftip_angvel": self.p_ftip_angvel,
                "p_action": self.p_action, "p_torque": self.p_torque,
                "p_work": self.p_work, "p_drop": self.p_drop,
                "total": self.total}

    TERM_NAMES = ("r_dist", "r_rot", "r_ftip_dist", "p_ftip_linvel",
                  "p_ftip_angvel", "p_action", "p_torque", "p_work", "p_drop")


def wrapped_angle_distance(a, b):
    """Smallest absolute angle between two orientations, in [0, pi]."""
    d = (a - b) % (2.0 * np.pi)
    return float(min(d, 2.0 * np.pi - d))


def compute_reward(state: SimState, action, dropped_now: bool, config: WorldConfig):
    """Reward for the state reached after applying `action`.

    `dropped_now` is true only on the step where the object first falls
    below the floor, so the one-time drop penalty cannot repeat.
    """
    obj, hand = state.object, state.hand
    action = np.asarray(action, dtype=np.float64)

    r_dist = -float(np.linalg.norm(hand.q[:2] - obj.position))
    r_rot = -wrapped_angle_distance(obj.theta, obj.target_theta)
    tip_d = np.linalg.norm(hand.tips - obj.position[None, :], axis=1)
    r_ftip = -float(tip_d.mean())

    p_lin = float(np.linalg.norm(hand.tip_velocities, axis=1).mean())
    p_ang = float(np.abs(hand.tip_omegas).mean())
    p_act = float(action @ action)
    tau = hand.applied_torques
    p_torque = float(tau @ tau)
    p_work = float(np.abs(tau * hand.qd).sum())
    p_drop = DROP_PENALTY if dropped_now else 0.0

    total = (LAM_DIST * r_dist + LAM_ROT * r_rot + LAM_FTIP_DIST * r_ftip
             - LAM_DROP * p_drop - LAM_LIN * p_lin - LAM_ANG * p_ang
             - LAM_ACT * p_act - LAM_TORQUE * p_torque - LAM_POWER * p_work)

    return total, RewardBreakdown(r_dist, r_rot, r_ftip, p_lin, p_ang, p_act,
                                  p_torque, p_work, p_drop, total)


def check_success(state: SimState, config: WorldConfig) -> bool:
    """Stable catch: held strictly inside tolerance for the full duration."""
    return state.hold_counter >= config.hold_steps and not state.dropped


def reward_lower_bound(config: WorldConfig):
    """Lower bound on the no-drop total for states inside the workspace
    envelope: |position components| <= `box`, object speed <= `v_cap`,
    fingertip speeds bounded by joint speed caps.
    """
    from .world import hand_model
    model = hand_model(config)
    box = max(abs(config.palm_limits_x[0]), abs(config.palm_limits_x[1]),
              abs(config.palm_limits_y[1]), abs(config.spawn_pos[0]),
              abs(config.spawn_pos[1])) + 1.0
    d_max = 2.0 * np.sqrt(2.0) * box
    reach = config.palm_half_width + sum(config.link_lengths)
    v_tip_max = (config.palm_speed_limit
                 + config.finger_speed_limit * reach * config.links_per_finger)
    w_tip_max = config.finger_speed_limit * config.links_per_finger
    tau_sq = float(model.tau_limit @ model.tau_limit)
    work_max = float(np.abs(model.tau_limit * model.qd_max).sum())
    return -(LAM_DIST * d_max + LAM_ROT * np.pi + LAM_FTIP_DIST * (d_max + reach)
             + LAM_LIN * v_tip_max + LAM_ANG * w_tip_max + LAM_ACT * config.dof
             + LAM_TORQUE * tau_sq + LAM_POWER * work_max)
