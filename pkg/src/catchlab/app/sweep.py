"""Sensitivity sweeps over the arbitration gate weights.

Runs the tele-catch arm with the flawed (lagged-jitter) scripted
operator across a grid of beta_v or beta_omega values and reports the
success rate per cell as CSV rows: parameter, value, episodes,
successes, success_rate.
"""
from __future__ import annotations

import csv
from dataclasses import replace

from ..daim import DaimConfig
from .episode import evaluate_arm


def sweep_beta(config, policy, parameter, values, episodes, seed,
               base_daim=None, teleop_profile="lagged-jitter"):
    if parameter not in ("beta_v", "beta_omega"):
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    base = base_daim or DaimConfig()
    rows = []
    for i, value in enumerate(values):
        daim = replace(base, **{parameter: float(value)})
        out = evaluate_arm(config, "tele-catch", episodes, seed + i,
                           policy=policy, daim=daim,
                           teleop_profile=teleop_profile)
        rows.append({"parameter": parameter, "value": float(value),
                     "episodes": episodes, "successes": out["successes"],
                     "success_rate": out["success_rate"]})
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["parameter", "value",
                                               "episodes", "successes",
                                               "success_rate"])
        writer.writeheader()
        writer.writerows(rows)
    return path
