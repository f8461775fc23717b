"""Command-line entry point: train / eval / plot / sweep."""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys

from . import harness, plots
from .envs import make_env
from .sac import SacAgent


def _cmd_train(args):
    cfg = harness.load_config(args.config)
    seeds = [args.seed] if args.seed is not None else None
    harness.run_experiment(cfg, args.out, seeds=seeds,
                           resume=not args.fresh)
    print(f"run complete: {args.out}")
    return 0


def _cmd_eval(args):
    import numpy as np

    with open(os.path.join(args.checkpoint, "forward_header.json")) as f:
        header = json.load(f)
    agent = SacAgent(header["obs_dim"], header["action_dim"],
                     skill_dim=header["skill_dim"])
    agent.load(args.checkpoint, "forward")
    protocol = harness.make_protocol(args.protocol, horizon=args.horizon)
    env = make_env(args.env)
    success, mean_dist = harness.evaluate(agent, env, protocol)
    print(f"success_rate={success:.4f} mean_final_distance={mean_dist:.4f}")
    return 0


def _cmd_plot(args):
    for path in plots.emit_plots(args.run_dir):
        print(path)
    return 0


def _cmd_sweep(args):
    cfg = harness.load_config(args.config)
    grid = {}
    for item in args.grid:
        key, _, values = item.partition("=")
        if not values:
            raise ValueError(f"grid entry {item!r} must look like key=v1,v2")
        grid[key] = values.split(",")
    keys = list(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        run_cfg = harness.load_config(args.config)
        harness.apply_overrides(run_cfg, overrides)
        tag = "_".join(f"{k.split('.')[-1]}{v}" for k, v in overrides.items())
        out = os.path.join(args.out, tag)
        harness.run_experiment(run_cfg, out)
        print(f"sweep point done: {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="resetgame",
        description="Reset-free skill learning via an adversarial reset "
                    "game, plus downstream hierarchical control.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a configured experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="run only this seed (default: all seeds in config)")
    p.add_argument("--out", required=True)
    p.add_argument("--fresh", action="store_true",
                   help="ignore existing checkpoints instead of resuming")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a forward-policy checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--env", default="pointmass")
    p.add_argument("--protocol", default="frozen15",
                   help="evaluation start-state set id")
    p.add_argument("--horizon", type=int, default=200)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("plot", help="render SVG plots from a run directory")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("sweep", help="grid sweep over config keys")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", nargs="+", required=True,
                   metavar="key=v1,v2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
