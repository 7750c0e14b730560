"""Command-line entry point: train, evaluate, sweep, validate-config, selftest."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, serialize_config
from .experiment import EPISODE_COLUMNS, EPISODE_METRICS, _write, run_experiment
from .greedy import GreedyPolicy
from .mappo import Agents, evaluate
from .nn import CheckpointError


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    ex = cfg.experiment
    if getattr(args, "seed", None) is not None:
        ex = replace(ex, seeds=(args.seed,))
    if getattr(args, "policy", None):
        ex = replace(ex, policy=args.policy)
    if getattr(args, "out", None):
        ex = replace(ex, out_dir=args.out)
    return replace(cfg, experiment=ex)


def cmd_train(args) -> int:
    cfg = _config(args)
    ex = cfg.experiment
    cfg = replace(cfg, experiment=replace(ex, sweep="none", sweep_values=(), sweep2="none",
                                          sweep2_values=()))
    paths = run_experiment(cfg)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def cmd_sweep(args) -> int:
    paths = run_experiment(_config(args))
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    ex = cfg.experiment
    seed = ex.seeds[0]
    env = cfg.make_env(seed)
    if ex.policy == "greedy" and not args.checkpoint:
        actors = GreedyPolicy()
    else:
        if not args.checkpoint:
            print("error: evaluate needs --checkpoint for learned policies", file=sys.stderr)
            return 2
        actors, _ = Agents.load(args.checkpoint, env, cfg.train)
    rows = evaluate(env, actors, ex.eval_episodes, seed=seed, deterministic=ex.deterministic_eval)
    out = Path(ex.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    policy = actors.kind if isinstance(actors, Agents) else "greedy"
    head = [policy, 0, "none", "", "none", ""]
    _write(out / "evaluate.csv", EPISODE_COLUMNS,
           [head + [seed, r["episode"]] + [r[m] for m in EPISODE_METRICS] for r in rows])
    mean = sum(r["weighted_energy"] for r in rows) / len(rows)
    print(f"mean weighted energy {mean:.6g} J over {len(rows)} episodes; {out / 'evaluate.csv'}")
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.dump:
        sys.stdout.write(serialize_config(cfg))
    else:
        print("config ok")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_all
    return 0 if run_all() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mecsim", description="Multi-UAV MEC simulator and MAPPO trainer")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, policy=True):
        p.add_argument("--config", type=Path, help="TOML experiment config")
        p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        p.add_argument("--out", help="output directory")
        if policy:
            p.add_argument("--policy", choices=("beta", "gaussian", "greedy"))

    p = sub.add_parser("train", help="train (or run the baseline) once and evaluate")
    common(p)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("evaluate", help="roll frozen-policy episodes from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=Path)
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("sweep", help="run the configured sweep")
    common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("validate-config", help="check a config file")
    p.add_argument("--config", type=Path)
    p.add_argument("--dump", action="store_true", help="print the fully resolved config")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
