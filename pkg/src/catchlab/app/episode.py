"""Episode engine shared by batch evaluation, sweeps, and the live server.

An Episode advances one control step at a time so callers can interleave
broadcasting or pacing. Three modes:

    tele-pure          execute the retargeted teleop reference directly
    tele-catch         blend teleop into diffusion denoising (DAIM)
    open-loop-policy   pure diffusion inference, teleop ignored

The teleop source is any object with `frame(state, t) -> TeleopFrame or
None`; None falls back to the neutral frame (and the stale-decay policy
applies through the frame timestamp).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..daim import (DaimConfig, TeleopFrame, default_retarget_map,
                    guided_denoise, retarget)
from ..diffusion import infer_action
from ..errors import ContractError, SimFault
from ..sim import CatchEnv, WorldConfig, proprio_state

MODES = ("tele-pure", "tele-catch", "open-loop-policy")


@dataclass
class EpisodeResult:
    success: bool
    dropped: bool
    steps: int
    invalid: bool = False

    def to_dict(self):
        return {"success": self.success, "dropped": self.dropped,
                "steps": self.steps, "invalid": self.invalid}


class Episode:
    """One live episode; call `step()` until it reports done."""

    def __init__(self, config: WorldConfig, mode, env_rng, policy=None,
                 daim=None, mapping=None, teleop=None, infer_rng=None,
                 cloud_rng=None, log=None):
        if mode not in MODES:
            raise ContractError(f"unknown mode {mode!r}")
        if mode != "tele-pure" and policy is None:
            raise ContractError(f"mode {mode} requires a diffusion policy")
        self.config = config
        self.mode = mode
        self.policy = policy
        self.daim = daim or DaimConfig()
        self.mapping = mapping or default_retarget_map(config)
        self.teleop = teleop
        self.infer_rng = infer_rng
        self.cloud_rng = cloud_rng
        self.log = log

        self.env = CatchEnv(config, env_rng)
        self.state = self.env.reset()
        self.t = 0
        self.done = False
        self.result = None
        self.last_trace = None
        self.last_input_seq = 0
        self._queue = []
        self._history = [proprio_state(self.state)]
        if log is not None:
            log.write_header(config, mode, self.env.episode_params)

    def _reference(self):
        frame = self.teleop.frame(self.state, self.t) if self.teleop else None
        if frame is None:
            frame = TeleopFrame(t_ms=self.t * self.config.dt * 1000.0,
                                cursor=np.zeros(2), grip=0.5, source="neutral")
        self.last_input_seq = max(self.last_input_seq, frame.seq)
        now_ms = self.t * self.config.dt * 1000.0
        return retarget(frame, self.mapping, now_ms=now_ms)

    def _next_action(self):
        x_ref = self._reference()
        if self.mode == "tele-pure":
            return x_ref, None
        if self._queue:
            return self._queue.pop(0), None
        _, fg = self.policy.cloud_feature(self.state.object, self.cloud_rng)
        cond = self.policy.build_condition(
            np.stack(self._history[-self.policy.config.n_obs:]), fg)
        trace = None
        if self.mode == "tele-catch":
            window, trace = guided_denoise(
                self.policy, cond, x_ref,
                (self.state.object.velocity, self.state.object.omega),
                self.daim, self.infer_rng)
        else:
            window = infer_action(self.policy, cond, self.infer_rng)
        self._queue = list(window[:self.policy.config.exec_steps])
        return self._queue.pop(0), trace

    def step(self):
        """Advance one control step; returns (state, done, result_or_None)."""
        if self.done:
            return self.state, True, self.result
        try:
            action, trace = self._next_action()
            state, reward, rbd, done, info = self.env.step(action)
        except SimFault:
            self.done = True
            self.result = EpisodeResult(False, False, self.t, invalid=True)
            return self.state, True, self.result
        self.state = state
        self.t += 1
        self._history.append(proprio_state(state))
        if trace is not None:
            self.last_trace = trace
        if self.log is not None:
            self.log.write_step(self.t, state, action, rbd, info)
            if trace is not None:
                self.log.write_blend(self.t, trace)
        if done:
            self.done = True
            self.result = EpisodeResult(bool(info["success"]),
                                        bool(state.dropped), self.t)
        return state, self.done, self.result

    def run(self):
        while not self.done:
            self.step()
        return self.result


def run_episode(config, mode, seeds, policy=None, daim=None, teleop_factory=None,
                mapping=None, log=None):
    """Convenience one-shot episode. `seeds` is a SeedSequence; teleop_factory
    (rng -> source) builds the scripted operator for this episode."""
    env_rng, op_rng, infer_rng, cloud_rng = (np.random.default_rng(s)
                                             for s in seeds.spawn(4))
    teleop = teleop_factory(op_rng) if teleop_factory else None
    ep = Episode(config, mode, env_rng, policy=policy, daim=daim,
                 mapping=mapping, teleop=teleop, infer_rng=infer_rng,
                 cloud_rng=cloud_rng, log=log)
    return ep.run()


def run_recorded_episode(config, mode, seed, path, policy=None, daim=None,
                         teleop_profile=None):
    """Run one episode while writing its replay log to `path`."""
    from ..daim import ScriptedOperator
    from .replay import ReplayWriter
    ss = np.random.SeedSequence(seed)
    env_ss, op_ss, infer_ss, cloud_ss = ss.spawn(4)
    teleop = None
    if teleop_profile is not None:
        teleop = ScriptedOperator(teleop_profile, config,
                                  np.random.default_rng(op_ss))
    with ReplayWriter(path, env_ss) as log:
        ep = Episode(config, mode, np.random.default_rng(env_ss),
                     policy=policy, daim=daim, teleop=teleop,
                     infer_rng=np.random.default_rng(infer_ss),
                     cloud_rng=np.random.default_rng(cloud_ss), log=log)
        return ep.run()


def evaluate_arm(config, mode, episodes, seed, policy=None, daim=None,
                 teleop_profile=None):
    """Batch success rate for one arm; returns dict with rates and tallies."""
    from ..daim import ScriptedOperator
    if episodes < 1:
        raise ContractError("need at least one episode")
    factory = None
    if teleop_profile is not None:
        factory = lambda rng: ScriptedOperator(teleop_profile, config, rng)
    succ = drop = invalid = 0
    for child in np.random.SeedSequence(seed).spawn(episodes):
        result = run_episode(config, mode, child, policy=policy, daim=daim,
                             teleop_factory=factory)
        if result.invalid:
            invalid += 1
            continue
        succ += result.success
        drop += result.dropped
    valid = episodes - invalid
    return {"mode": mode, "episodes": episodes, "valid": valid,
            "successes": succ, "drops": drop,
            "success_rate": succ / valid if valid else 0.0}
