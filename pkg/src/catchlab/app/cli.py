"""Command-line surface for every pipeline stage.

    catchlab train-rl   train the PPO expert, write checkpoint + metrics
    catchlab collect    roll a quality-gated trajectory dataset
    catchlab train-dp   train a diffusion policy on a dataset
    catchlab eval       success-rate and action-noise MSE tables
    catchlab serve      live teleoperation session service
    catchlab replay     re-simulate a replay log and verify bit-exactness
    catchlab sweep      gate-weight sensitivity grid (CSV)

Global flags: --config PATH (JSON document), --profile NAME, --seed N,
--out DIR. Exit codes: 0 ok, 2 usage, 3 configuration, 4 runtime fault.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from ..daim import ScriptedOperator, default_retarget_map, retarget
from ..daim.teleop import PROFILES
from ..dataset import collect as collect_dataset
from ..dataset import load as load_dataset
from ..dataset import save as save_dataset
from ..diffusion import DpPolicy, eval_mse, train_dp
from ..errors import CatchLabError, ConfigError
from ..ppo import ActorCritic, evaluate_policy, train_rl
from ..sim import policy_observation
from .episode import MODES, evaluate_arm
from .profiles import load_config
from .replay import verify_replay
from .sweep import sweep_beta, write_sweep_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4


def build_parser():
    parser = argparse.ArgumentParser(prog="catchlab",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config document")
    parser.add_argument("--profile", choices=["desk", "easy", "paper"],
                        help="named config profile (default desk)")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-rl", help="train the PPO catching expert")
    p.add_argument("--iterations", type=int, help="override max iterations")
    p.add_argument("--eval-episodes", type=int, default=25)

    p = sub.add_parser("collect", help="collect a quality-gated dataset")
    p.add_argument("--policy", default="scripted:expert",
                   help="'scripted:<profile>' or a PPO checkpoint path")
    p.add_argument("--train", type=int, help="accepted train trajectories")
    p.add_argument("--val", type=int, help="accepted val trajectories")

    p = sub.add_parser("train-dp", help="train a diffusion policy")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=["none", "global-feat", "u3r"])
    p.add_argument("--steps", type=int, help="override optimizer steps")

    p = sub.add_parser("eval", help="success-rate and MSE tables")
    p.add_argument("--episodes", type=int, default=15)
    p.add_argument("--checkpoint", action="append", default=[],
                   help="diffusion checkpoint (repeatable for MSE rows)")
    p.add_argument("--dataset", help="dataset dir for the MSE table")
    p.add_argument("--arms", default="tele-pure,tele-catch",
                   help=f"comma list from {MODES}")
    p.add_argument("--teleop", default="lagged-jitter", choices=PROFILES)

    p = sub.add_parser("serve", help="run the live session service")
    p.add_argument("--checkpoint", help="diffusion checkpoint for policy modes")
    p.add_argument("--host")
    p.add_argument("--port", type=int)

    p = sub.add_parser("replay", help="verify a replay log")
    p.add_argument("file")

    p = sub.add_parser("sweep", help="gate-weight sensitivity sweep")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--beta-v", help="comma list, e.g. 1,10,20")
    p.add_argument("--beta-omega", help="comma list, e.g. 0.05,0.1,0.15")
    p.add_argument("--episodes", type=int, default=40)
    return parser


def scripted_source_factory(profile_name, world):
    mapping = default_retarget_map(world)

    def factory(episode, rng):
        op = ScriptedOperator(profile_name, world, rng)
        return lambda state, t: retarget(op.frame(state, t), mapping)
    return factory


def ppo_source_factory(path, world):
    policy = ActorCritic.load(path)

    def factory(episode, rng):
        def act(state, t):
            obs = np.clip(policy_observation(state, world), -5.0, 5.0)
            action, _, _, _ = policy.act_np(obs)
            return action[0]
        return act
    return factory


def cmd_train_rl(cfg, args):
    from dataclasses import replace
    ppo_cfg = cfg.ppo
    if args.iterations is not None:
        ppo_cfg = replace(ppo_cfg, max_iterations=args.iterations)
    out = os.path.join(args.out, "rl")
    policy, metrics = train_rl(cfg.world, ppo_cfg, cfg.seed, out_dir=out)
    report = evaluate_policy(policy, cfg.world, args.eval_episodes,
                             seed=cfg.seed + 1)
    print(f"trained {len(metrics)} iterations; checkpoint in {out}")
    print(f"deterministic eval: success rate {report['success_rate']:.2f}, "
          f"mean return {report['mean_return']:.1f}")
    return EXIT_OK


def cmd_collect(cfg, args):
    world = cfg.world
    if args.policy.startswith("scripted:"):
        profile_name = args.policy.split(":", 1)[1]
        factory = scripted_source_factory(profile_name, world)
    else:
        factory = ppo_source_factory(args.policy, world)
    targets = {"train": args.train or cfg.collect.train,
               "val": args.val or cfg.collect.val}
    dataset, _ = collect_dataset(factory, world, targets, cfg.seed,
                                 quality=cfg.quality,
                                 m_points=cfg.collect.m_points,
                                 exec_noise=cfg.collect.exec_noise)
    out = os.path.join(args.out, "dataset")
    save_dataset(dataset, out)
    man = dataset.manifest
    print(f"dataset at {out}: {man['counts']} acceptance "
          f"{man['acceptance_rate']:.2f} classes {man['classes']}")
    return EXIT_OK


def cmd_train_dp(cfg, args):
    from dataclasses import replace
    dp_cfg = cfg.dp
    if args.mode:
        dp_cfg = replace(dp_cfg, visual_mode=args.mode)
    if args.steps is not None:
        dp_cfg = replace(dp_cfg, train_steps=args.steps)
    dataset = load_dataset(args.dataset)
    out = os.path.join(args.out, f"dp-{dp_cfg.visual_mode}")
    policy, history = train_dp(dataset, dp_cfg, cfg.seed, out_dir=out)
    val = eval_mse(policy, dataset.val, eval_seed=cfg.seed)
    print(f"trained {dp_cfg.train_steps} steps ({dp_cfg.visual_mode}); "
          f"checkpoint in {out}")
    print("validation noise MSE:",
          " ".join(f"{k}={v:.4f}" for k, v in val.items()))
    return EXIT_OK


def cmd_eval(cfg, args):
    if args.episodes < 1:
        print("eval needs at least one episode", file=sys.stderr)
        return EXIT_USAGE
    arms = [a.strip() for a in args.arms.split(",") if a.strip()]
    for arm in arms:
        if arm not in MODES:
            print(f"unknown arm {arm!r}", file=sys.stderr)
            return EXIT_USAGE
    policy = DpPolicy.load(args.checkpoint[0]) if args.checkpoint else None
    if any(a != "tele-pure" for a in arms) and policy is None:
        print("policy arms need --checkpoint", file=sys.stderr)
        return EXIT_USAGE

    os.makedirs(args.out, exist_ok=True)
    rows = []
    for arm in arms:
        out = evaluate_arm(cfg.world, arm, args.episodes, cfg.seed,
                           policy=policy, daim=cfg.daim,
                           teleop_profile=None if arm == "open-loop-policy"
                           else args.teleop)
        rows.append(out)
        print(f"{arm:18s} SR {out['success_rate']:.3f} "
              f"({out['successes']}/{out['valid']})")
    sr_path = os.path.join(args.out, "success_rates.csv")
    with open(sr_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"success-rate table -> {sr_path}")

    if args.dataset and args.checkpoint:
        dataset = load_dataset(args.dataset)
        classes = dataset.manifest["classes"]
        mse_path = os.path.join(args.out, "action_noise_mse.csv")
        with open(mse_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["method", *classes, "overall"])
            for path in args.checkpoint:
                p = DpPolicy.load(path)
                scores = eval_mse(p, dataset.val, eval_seed=cfg.seed)
                writer.writerow([p.config.visual_mode]
                                + [f"{scores.get(c, float('nan')):.4f}"
                                   for c in classes]
                                + [f"{scores['overall']:.4f}"])
        print(f"action-noise MSE table -> {mse_path}")
    return EXIT_OK


def cmd_serve(cfg, args):
    import uvicorn

    from .server import create_app
    policy = DpPolicy.load(args.checkpoint) if args.checkpoint else None
    app = create_app(cfg, policy)
    host = args.host or cfg.serve.host
    port = args.port or cfg.serve.port
    print(f"serving on http://{host}:{port} "
          f"(policy: {'loaded' if policy else 'none, tele-pure only'})")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return EXIT_OK


def cmd_replay(cfg, args):
    divergent = verify_replay(args.file)
    if divergent is None:
        print("replay ok: every stored state reproduced bit-exactly")
        return EXIT_OK
    print(f"replay DIVERGED at step {divergent}", file=sys.stderr)
    return EXIT_RUNTIME


def cmd_sweep(cfg, args):
    policy = DpPolicy.load(args.checkpoint)
    grids = []
    if args.beta_v:
        grids.append(("beta_v", [float(v) for v in args.beta_v.split(",")]))
    if args.beta_omega:
        grids.append(("beta_omega",
                      [float(v) for v in args.beta_omega.split(",")]))
    if not grids:
        print("sweep needs --beta-v and/or --beta-omega", file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(args.out, exist_ok=True)
    for parameter, values in grids:
        rows = sweep_beta(cfg.world, policy, parameter, values, args.episodes,
                          cfg.seed, base_daim=cfg.daim)
        path = os.path.join(args.out, f"sweep_{parameter}.csv")
        write_sweep_csv(rows, path)
        for row in rows:
            print(f"{parameter}={row['value']:g}: SR {row['success_rate']:.3f}")
        print(f"sweep table -> {path}")
    return EXIT_OK


COMMANDS = {"train-rl": cmd_train_rl, "collect": cmd_collect,
            "train-dp": cmd_train_dp, "eval": cmd_eval, "serve": cmd_serve,
            "replay": cmd_replay, "sweep": cmd_sweep}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if e.code is not None else EXIT_USAGE
    try:
        cfg = load_config(args.config, args.profile, args.seed)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (CatchLabError, OSError, RuntimeError) as e:
        print(f"runtime fault: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
