"""Command line entry point.

Every ``section.key`` of the experiment config is also a flag
(``--env.task box``); flags override the ``--config`` file.  Exit status is
0 on success, 2 for configuration errors and 3 for runtime failures.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench
from .algos import evaluate
from .demos import collect_demos, load_demos, save_demos, verify_demos
from .envs import ConfigError
from .policy import load_policy

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config file (section.key = value lines)")
    g = p.add_argument_group("config keys")
    for key in bench.KEYS:
        g.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="VALUE")


def _load(args) -> bench.ExperimentConfig:
    cfg = bench.load_config(args.config) if args.config else bench.ExperimentConfig()
    over = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    return bench.apply_overrides(cfg, over)


def _out_path(args, cfg, name: str) -> Path:
    path = Path(args.out) if args.out else Path(cfg.output) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_train(args) -> int:
    cfg = _load(args)
    out = bench.run_experiment(cfg, resume=args.resume, log=print)
    for r in bench.read_table(out / "summary.csv"):
        if r["seed"] == "median":
            print(f"median iterations to success: {r['iterations_to_success']}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load(args)
    policy = load_policy(args.checkpoint)
    succ, ret = evaluate(policy, cfg.env, args.n or cfg.train.eval_rollouts, args.seed)
    print(f"success_rate={succ!r} mean_return={ret!r}")
    return EXIT_OK


def cmd_demos_record(args) -> int:
    cfg = _load(args)
    d = cfg.demos
    env = cfg.env if d.wide_init is None else bench.with_overrides(cfg.env, wide_init=d.wide_init)
    demos = collect_demos(env, n=d.count, slowdown=d.slowdown, action_noise=d.noise, seed=d.seed)
    save_demos(demos, args.out)
    print(f"wrote {len(demos)} demonstrations to {args.out}")
    return EXIT_OK


def cmd_demos_verify(args) -> int:
    cfg = _load(args)
    demos = load_demos(args.file)
    env = bench.with_overrides(cfg.env, wide_init=demos.wide_init)
    if env.task.value != demos.task:
        raise ConfigError(f"demos are for task {demos.task!r}, config says {env.task.value!r}")
    problems = verify_demos(demos, env)
    for p in problems:
        print(p)
    print(f"{len(demos)} demonstrations, {len(problems)} problems")
    return EXIT_OK if not problems else EXIT_RUNTIME


def cmd_robustness(args) -> int:
    cfg = _load(args)
    policy = load_policy(args.checkpoint)
    axis = "init_angle" if args.axis == "init_angle" else "obs_action_noise"
    grid = cfg.analysis.init_angles if axis == "init_angle" else cfg.analysis.noise_levels
    rows = bench.robustness_sweep(policy, cfg.env, axis, grid, cfg.analysis.n_rollouts, args.seed)
    path = _out_path(args, cfg, f"robustness_{axis}.csv")
    bench.write_table(path, rows, ("axis", "value", "success_rate", "mean_return"))
    for r in rows:
        print(f"{r['value']:>6g}  success {r['success_rate']:.2f}")
    print(f"monotone trend: {bench.monotone_trend(rows)}")
    return EXIT_OK


def cmd_actuation(args) -> int:
    cfg = _load(args)
    rows = bench.actuation_analysis(cfg, log=print)
    bench.write_table(_out_path(args, cfg, "actuation.csv"), rows,
                      ("scheme", "raw_vibration", "vibration_score", "post_train_return"))
    return EXIT_OK


def cmd_rewards(args) -> int:
    cfg = _load(args)
    path = _out_path(args, cfg, "rewards.csv")
    rows = bench.reward_ablation(cfg, out=path.parent, log=print)
    bench.write_table(path, rows, ("variant", "seed", "iterations_to_success", "solved"))
    return EXIT_OK


def cmd_randomization(args) -> int:
    cfg = _load(args)
    rows = bench.randomization_study(cfg, log=print)
    bench.write_table(_out_path(args, cfg, "randomization.csv"), rows,
                      ("variant", "seed", "nominal_success", "heldout_success"))
    return EXIT_OK


def cmd_report(args) -> int:
    """Re-derive summaries and put every curve on one normalized scale:
    0 is the random policy, 1 the best DAPG point (best point overall when
    no DAPG run is included)."""
    runs = []
    for d in map(Path, args.dirs):
        if not (d / "config.txt").exists():
            raise ConfigError(f"{d} has no config.txt")
        cfg = bench.load_config(d / "config.txt")
        npg = cfg.train.dapg.npg if cfg.train.algo == "dapg" else cfg.train.npg
        bench.write_table(d / "summary.csv", bench.summarize(d, cfg.seeds, npg.max_iters),
                          bench.SUMMARY_COLUMNS)
        curves = [bench.read_curve(d / f"curve_seed{s}.csv") for s in cfg.seeds]
        runs.append((d, cfg, curves))
    anchors = [c for _, cfg, cs in runs if cfg.train.algo == "dapg" for c in cs]
    anchors = anchors or [c for _, _, cs in runs for c in cs]
    best = max(p.mean_return for c in anchors for p in c)
    rows = []
    for d, cfg, curves in runs:
        rb = bench.resolve_random_baseline(cfg)
        for c in bench.normalize_scores(curves, rb, best):
            running = np.maximum.accumulate([p.normalized_score for p in c])
            for p, m in zip(c, running):
                rows.append(dict(run=d.name, algo=cfg.train.algo, seed=p.seed,
                                 iteration=p.iteration, env_steps=p.env_steps,
                                 mean_return=p.mean_return, normalized_score=p.normalized_score,
                                 best_so_far=float(m), success_rate=p.success_rate))
        med = [r for r in bench.read_table(d / "summary.csv") if r["seed"] == "median"][0]
        print(f"{d.name}: {cfg.train.algo} median iterations to success "
              f"{med['iterations_to_success']}")
    out = Path(args.out) if args.out else Path(args.dirs[0]).parent / "report.csv"
    bench.write_table(out, rows, ("run", "algo", "seed", "iteration", "env_steps", "mean_return",
                                  "normalized_score", "best_so_far", "success_rate"))
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dexrl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train every seed of an experiment")
    _config_flags(s)
    s.add_argument("--resume", action="store_true", help="continue an existing output directory")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a policy checkpoint")
    _config_flags(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--n", type=int, default=0, help="rollouts (default: train.eval_rollouts)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_eval)

    demos = sub.add_parser("demos", help="record or verify demonstration files")
    dsub = demos.add_subparsers(dest="demos_command", required=True)
    s = dsub.add_parser("record")
    _config_flags(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_demos_record)
    s = dsub.add_parser("verify")
    _config_flags(s)
    s.add_argument("file")
    s.set_defaults(func=cmd_demos_verify)

    an = sub.add_parser("analyze", help="robustness, actuation, reward and randomization studies")
    asub = an.add_subparsers(dest="analysis", required=True)
    s = asub.add_parser("robustness")
    _config_flags(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--axis", choices=("init_angle", "noise"), default="noise")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_robustness)
    for name, func in (("actuation", cmd_actuation), ("rewards", cmd_rewards),
                       ("randomization", cmd_randomization)):
        s = asub.add_parser(name)
        _config_flags(s)
        s.add_argument("--out")
        s.set_defaults(func=func)

    s = sub.add_parser("report", help="summaries and normalized curves for run directories")
    s.add_argument("dirs", nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, bench.ExperimentExists) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
