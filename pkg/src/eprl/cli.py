"""Experiment front door.

Subcommands: train, eval, baseline, analyze, urn-demo, preset-list.
Runs are deterministic in (config, seed); every artifact carries the
config hash, and analyze refuses to merge mismatched runs unless forced.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np
import pandas as pd

from . import analysis, config as config_mod
from .agent import NumericalAbort
from .baselines import ALGORITHMS, run_baseline
from .recording import (METRICS_COLUMNS, STEP_COLUMNS, CsvLog,
                        check_same_hash, read_log)
from .taskgen import UrnState, TaskSpec, urn_draw
from .trainer import Trainer


def _load_config(args) -> config_mod.ExperimentConfig:
    if bool(args.config) == bool(args.preset):
        raise ValueError("exactly one of --config or --preset is required")
    config = (config_mod.load(args.config) if args.config
              else config_mod.preset(args.preset))
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = args.out
    if getattr(args, "workers", None) is not None:
        config.workers = args.workers
    config.validate()
    return config


def cmd_train(args) -> int:
    config = _load_config(args)
    if args.eval_only:
        if not args.checkpoint:
            raise ValueError("--eval-only requires --checkpoint")
        return _evaluate(config, args.checkpoint)
    trainer = Trainer(config)
    summary = trainer.train(config.out, progress=args.progress)
    print(f"trained {config.kind}/{config.variant} seed {config.seed}: "
          f"eval mean return {summary['eval_mean_return']:.4f} "
          f"({summary['train_seconds']:.0f}s) -> {config.out}")
    return 0


def _evaluate(config, checkpoint) -> int:
    trainer = Trainer(config)
    trainer.agent.load(checkpoint)
    before = trainer.agent.param_hash()
    summary = trainer.evaluate(config.out)
    assert trainer.agent.param_hash() == before
    print(f"evaluated {config.kind}/{config.variant}: mean return "
          f"{summary['eval_mean_return']:.4f} (params {before}) -> {config.out}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    return _evaluate(config, args.checkpoint)


def cmd_baseline(args) -> int:
    algos = list(ALGORITHMS) if args.algo == "all" else [args.algo]
    os.makedirs(args.out, exist_ok=True)
    token = f"baseline arms={args.arms} trials={args.trials} episodes={args.episodes}"
    pseudo_hash = hashlib.sha256(token.encode()).hexdigest()[:12]
    rng = np.random.default_rng(args.seed)
    for algo in algos:
        returns, records = run_baseline(algo, args.arms, args.trials,
                                        args.episodes, rng)
        meta = {"config_hash": pseudo_hash, "seed": args.seed, "algo": algo}
        with CsvLog(os.path.join(args.out, f"{algo}_metrics.csv"),
                    METRICS_COLUMNS, meta) as log:
            for episode, ret in enumerate(returns):
                log.write({"worker": 0, "epoch": 0, "episode": episode,
                           "task_id": algo, "exposure": 0, "ret": ret,
                           "policy_loss": 0.0, "value_loss": 0.0,
                           "entropy": 0.0, "grad_norm": 0.0, "skipped": 0,
                           "mean_r_gate": 0.0})
        with CsvLog(os.path.join(args.out, f"{algo}_steps.csv"),
                    STEP_COLUMNS, meta) as log:
            for rec in records:
                log.write({"worker": 0, "epoch": 0, "exposure": 0,
                           "task_id": algo, **rec})
        regret = 9.0 - returns.mean() if args.trials == 10 else float("nan")
        print(f"{algo}: mean return {returns.mean():.4f} over "
              f"{args.episodes} episodes (regret {regret:.4f})")
    return 0


def cmd_analyze(args) -> int:
    run_dirs = args.runs
    step_paths = [os.path.join(d, "eval_steps.csv") for d in run_dirs]
    metric_paths = [os.path.join(d, "metrics.csv") for d in run_dirs]
    for path in step_paths + metric_paths:
        if not os.path.exists(path):
            raise ValueError(f"missing artifact {path}")
    merged_hash = check_same_hash(step_paths + metric_paths, force=args.force)
    kinds = {config_mod.load(os.path.join(d, "config.ini")).kind for d in run_dirs}
    if len(kinds) > 1 and not args.force:
        raise ValueError(f"runs mix experiment kinds {sorted(kinds)}")
    kind = sorted(kinds)[0]
    os.makedirs(args.out, exist_ok=True)
    meta = {"config_hash": merged_hash or "mixed", "seed": "merged",
            "kind": kind, "n_runs": len(run_dirs)}
    steps = pd.concat([read_log(p) for p in step_paths], ignore_index=True)
    metrics = [read_log(p) for p in metric_paths]
    wrote = []

    curve = analysis.training_curve(metrics)
    path = os.path.join(args.out, "training_curve.csv")
    analysis.write_training_curve(curve, path, meta)
    wrote.append(path)
    if kind in ("barcode_bandit", "class_bandit", "compositional_bandit",
                "two_step"):
        regret = analysis.regret_by_exposure(steps)
        path = os.path.join(args.out, "regret_by_exposure.csv")
        analysis.write_regret(regret, path, meta)
        wrote.append(path)
    if kind == "water_maze":
        table = analysis.steps_to_goal_by_exposure(steps)
        path = os.path.join(args.out, "maze_steps.csv")
        analysis.write_maze_steps(table, path, meta)
        wrote.append(path)
    if kind == "two_step":
        course = analysis.rgate_timecourse(steps)
        path = os.path.join(args.out, "rgate_timecourse.csv")
        analysis.write_rgate_timecourse(course, path, meta)
        wrote.append(path)
        contrast = analysis.rgate_cued_contrast(steps[steps["stage"].notna()])
        print(f"r-gate cued {contrast['mean_cued']:.4f} vs uncued "
              f"{contrast['mean_uncued']:.4f} (welch t={contrast['t']:.2f}, "
              f"p={contrast['p']:.3g})")
        episodes = analysis.build_twostep_episode_table(steps)
        if len(episodes) >= 100:
            fit = analysis.fit_choice_model(episodes)
            path = os.path.join(args.out, "choice_fit.csv")
            analysis.write_choice_fit(fit, path, meta)
            wrote.append(path)
    for path in wrote:
        print(f"wrote {path}")
    return 0


def cmd_urn_demo(args) -> int:
    rng = np.random.default_rng(args.seed)
    state = UrnState(alpha=args.alpha)
    counter = {"n": 0}

    def base(_rng):
        counter["n"] += 1
        return TaskSpec(f"task{counter['n']}", {}, None)

    seen: set[str] = set()
    fresh = np.zeros(args.draws, dtype=bool)
    for n in range(args.draws):
        task = urn_draw(state, base, rng)
        fresh[n] = task.task_id not in seen
        seen.add(task.task_id)
    print(f"urn demo: alpha={args.alpha}, {args.draws} draws, "
          f"{len(seen)} distinct tasks")
    print(f"{'window':>16} {'fresh%':>8} {'theory%':>8}")
    window = max(1, args.draws // 10)
    for lo in range(0, args.draws, window):
        hi = min(lo + window, args.draws)
        theory = np.mean([args.alpha / (args.alpha + n) for n in range(lo, hi)])
        print(f"{f'{lo}-{hi - 1}':>16} {fresh[lo:hi].mean():>8.3f} {theory:>8.3f}")
    counts = {}
    for task in state.drawn:
        counts[task.task_id] = counts.get(task.task_id, 0) + 1
    top = sorted(counts.values(), reverse=True)[:5]
    print(f"most duplicated task counts (rich-get-richer): {top}")
    return 0


def cmd_preset_list(_args) -> int:
    for name in config_mod.PRESET_NAMES:
        c = config_mod.preset(name)
        detail = (f"episodes/epoch={c.plan_episodes}")
        if c.kind.endswith("bandit"):
            detail += f", arms={c.n_actions}, trials={c.horizon}"
        elif c.kind == "water_maze":
            detail += f", steps={c.horizon}"
        else:
            detail += f", uncued={c.n_uncued}"
        print(f"{name:16s} {c.kind:22s} {detail}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eprl", description="episodic meta-RL experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=True):
        p.add_argument("--config", help="config file (INI)")
        p.add_argument("--preset", help="named preset configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        if workers:
            p.add_argument("--workers", type=int,
                           help="override parallel worker count")

    p = sub.add_parser("train", help="train an agent and evaluate it")
    common(p)
    p.add_argument("--eval-only", action="store_true",
                   help="skip training; evaluate --checkpoint instead")
    p.add_argument("--checkpoint", help="checkpoint for --eval-only")
    p.add_argument("--progress", action="store_true", help="print progress")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint with frozen weights")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="run classical bandit baselines")
    p.add_argument("--algo", default="all", choices=list(ALGORITHMS) + ["all"])
    p.add_argument("--arms", type=int, default=10)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("analyze", help="summarize run artifacts into figure CSVs")
    p.add_argument("runs", nargs="+", help="run directories to merge")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true",
                   help="merge despite config-hash mismatches")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("urn-demo", help="simulate the duplicating urn sampler")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--draws", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_urn_demo)

    p = sub.add_parser("preset-list", help="list named configurations")
    p.set_defaults(func=cmd_preset_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
