"""Experiment driver: configs, learning-curve artifacts and the analyses
(robustness, actuation, reward shaping, dynamics randomization).

Config files are line oriented, one ``section.key = value`` per line, with
``#`` comments.  Every key has a default and unknown keys are rejected, so a
typo in an ablation config fails loudly instead of silently running the
default.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .algos import DapgConfig, NpgConfig, TrainConfig, TrainResult, evaluate, train
from .demos import DemoSet, collect_demos, load_demos, save_demos
from .envs import (ARM_RANGE, DOOR_MAX, Actuation, ConfigError, EnvConfig, RandomizationConfig,
                   Task, VecEnv, make_spec, success_from_dtheta, with_overrides)
from .numkit import vibration_metric
from .policy import GaussianPolicy, save_policy
from .rollout import rollout_batch, spawn_generators, uniform_actor

CURVE_COLUMNS = ("seed", "iteration", "env_steps", "mean_return", "normalized_score",
                 "success_rate", "kl", "wallclock_s")
SUMMARY_COLUMNS = ("seed", "iterations_to_success", "solved", "initial_success",
                   "final_success", "final_return")


class ExperimentExists(FileExistsError):
    """The output directory already holds results and ``resume`` was not set."""


# --------------------------------------------------------------------------
# config

@dataclass(frozen=True)
class DemoOptions:
    count: int = 20
    seed: int = 123
    slowdown: float = 2.0
    noise: float = 0.05
    wide_init: Optional[bool] = None      # None: follow the environment
    file: str = ""                        # load instead of generating


@dataclass(frozen=True)
class ScoreOptions:
    # None means "measure": random-policy return, or the best point of the run
    random_baseline: Optional[float] = None
    best: Optional[float] = None
    random_rollouts: int = 20


@dataclass(frozen=True)
class AnalysisOptions:
    noise_levels: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    init_angles: tuple[float, ...] = (-45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0)
    fourier_k: int = 5
    n_rollouts: int = 10
    vibration_seeds: int = 20
    train: bool = False
    train_iters: int = 40
    reward_variants: tuple[str, ...] = ("r1", "r2", "r3")
    randomization_variants: tuple[str, ...] = ("A", "B", "C")
    heldout_low: tuple[float, float] = (0.5, 0.7)
    heldout_high: tuple[float, float] = (1.3, 1.5)


@dataclass(frozen=True)
class ExperimentConfig:
    id: str = "experiment"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output: str = "runs/experiment"
    record_wallclock: bool = False
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    demos: DemoOptions = field(default_factory=DemoOptions)
    score: ScoreOptions = field(default_factory=ScoreOptions)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in flatten(self).items())


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(conv):
    def parse(s: str):
        parts = [p.strip() for p in s.split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        return tuple(conv(p) for p in parts)
    return parse


def _pair(s: str):
    v = _list(float)(s)
    if len(v) != 2:
        raise ValueError(f"expected two numbers, got {s!r}")
    return v


def _auto(conv):
    def parse(s: str):
        return None if s.strip().lower() == "auto" else conv(s)
    return parse


def _format(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# key -> parser; flatten() and _build() below must agree with this table
KEYS: dict[str, Callable[[str], Any]] = {
    "experiment.id": str,
    "experiment.seeds": _list(int),
    "experiment.output": str,
    "experiment.record_wallclock": _bool,
    "env.task": str,
    "env.fingers": int,
    "env.actuation": str,
    "env.randomization": str,
    "env.gain_range": _pair,
    "env.friction_range": _pair,
    "env.wide_init": _bool,
    "env.horizon": int,
    "env.dt": float,
    "env.reward_variant": str,
    "env.abs_door_term": _bool,
    "env.gamma": float,
    "env.seed": int,
    "train.algo": str,
    "train.hidden": _list(int),
    "train.init_log_std": float,
    "train.gae_lambda": float,
    "train.normalize_adv": _bool,
    "train.baseline_epochs": int,
    "train.eval_rollouts": int,
    "train.stop_on_success": _bool,
    "npg.step_size": float,
    "npg.cg_iters": int,
    "npg.cg_damping": float,
    "npg.n_traj": int,
    "npg.max_iters": int,
    "dapg.lam0": float,
    "dapg.lam1": float,
    "dapg.bc_epochs": int,
    "dapg.bc_step_size": float,
    "demos.count": int,
    "demos.seed": int,
    "demos.slowdown": float,
    "demos.noise": float,
    "demos.wide_init": _auto(_bool),
    "demos.file": str,
    "score.random_baseline": _auto(float),
    "score.best": _auto(float),
    "score.random_rollouts": int,
    "analysis.noise_levels": _list(float),
    "analysis.init_angles": _list(float),
    "analysis.fourier_k": int,
    "analysis.n_rollouts": int,
    "analysis.vibration_seeds": int,
    "analysis.train": _bool,
    "analysis.train_iters": int,
    "analysis.reward_variants": _list(str),
    "analysis.randomization_variants": _list(str),
    "analysis.heldout_low": _pair,
    "analysis.heldout_high": _pair,
}


def flatten(cfg: ExperimentConfig) -> dict[str, Any]:
    """Every config key with its typed value, in ``KEYS`` order."""
    e, t = cfg.env, cfg.train
    src = {
        "experiment": dict(id=cfg.id, seeds=cfg.seeds, output=cfg.output,
                           record_wallclock=cfg.record_wallclock),
        "env": dict(task=e.task.value, fingers=e.fingers, actuation=e.actuation.value,
                    randomization=e.randomization.variant,
                    gain_range=tuple(e.randomization.gain_range),
                    friction_range=tuple(e.randomization.friction_range),
                    wide_init=e.wide_init, horizon=e.horizon, dt=e.dt,
                    reward_variant=e.reward_variant, abs_door_term=e.abs_door_term,
                    gamma=e.gamma, seed=e.seed),
        "train": dict(algo=t.algo, hidden=tuple(t.hidden), init_log_std=t.init_log_std,
                      gae_lambda=t.gae_lambda, normalize_adv=t.normalize_adv,
                      baseline_epochs=t.baseline_epochs, eval_rollouts=t.eval_rollouts,
                      stop_on_success=t.stop_on_success),
        "npg": vars(t.npg),
        "dapg": {k: getattr(t.dapg, k) for k in ("lam0", "lam1", "bc_epochs", "bc_step_size")},
        "demos": vars(cfg.demos),
        "score": vars(cfg.score),
        "analysis": vars(cfg.analysis),
    }
    out = {}
    for key in KEYS:
        sec, name = key.split(".", 1)
        v = src[sec][name]
        out[key] = tuple(v) if isinstance(v, list) else v
    return out


def _build(flat: dict[str, Any]) -> ExperimentConfig:
    g = lambda sec: {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith(sec + ".")}
    try:
        ex, en, tr = g("experiment"), g("env"), g("train")
        rnd = RandomizationConfig(variant=en.pop("randomization"),
                                  gain_range=en.pop("gain_range"),
                                  friction_range=en.pop("friction_range"))
        env = EnvConfig(randomization=rnd, **en)
        npg = NpgConfig(**g("npg"))
        dapg = DapgConfig(npg=npg, **g("dapg"))
        train_cfg = TrainConfig(npg=npg, dapg=dapg, **tr)
        an = AnalysisOptions(**g("analysis"))
        for v in an.reward_variants:
            if v not in ("r1", "r2", "r3"):
                raise ValueError(f"unknown reward variant {v!r}")
        for v in an.randomization_variants:
            RandomizationConfig(variant=v)
        if not ex["seeds"]:
            raise ValueError("need at least one seed")
        return ExperimentConfig(env=env, train=train_cfg, demos=DemoOptions(**g("demos")),
                                score=ScoreOptions(**g("score")), analysis=an, **ex)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Set ``section.key`` entries from their text form; unknown keys raise."""
    flat = flatten(cfg)
    for key, text in overrides.items():
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            flat[key] = KEYS[key](text)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return _build(flat)


def parse_config(text: str) -> ExperimentConfig:
    overrides: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or "." not in key:
            raise ConfigError(f"line {n}: expected 'section.key = value', got {raw!r}")
        if key not in KEYS:
            raise ConfigError(f"line {n}: unknown config key {key!r}")
        if key in overrides:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        overrides[key] = value.strip()
    return apply_overrides(ExperimentConfig(), overrides)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


# --------------------------------------------------------------------------
# curves and scores

@dataclass(frozen=True)
class CurvePoint:
    seed: int
    iteration: int
    env_steps: int
    mean_return: float
    normalized_score: float
    success_rate: float
    kl: float
    wallclock_s: Optional[float] = None


def normalize(score, random_baseline: float, best_score: float):
    if best_score == random_baseline:
        raise ValueError("best score equals the random baseline")
    return (np.asarray(score, dtype=float) - random_baseline) / (best_score - random_baseline)


def normalize_scores(curves, random_baseline: float, best_score: float):
    """Rescale mean returns so the random policy scores 0 and ``best_score`` 1.

    ``curves`` is a list of CurvePoint or a list of such lists; the shape is
    preserved.  Scores are always recomputed from ``mean_return``, so applying
    this twice with the same anchors changes nothing.
    """
    if best_score == random_baseline:
        raise ValueError("best score equals the random baseline")
    out = []
    for c in curves:
        if isinstance(c, CurvePoint):
            out.append(replace(c, normalized_score=float(
                normalize(c.mean_return, random_baseline, best_score))))
        else:
            out.append(normalize_scores(c, random_baseline, best_score))
    return out


def random_policy_return(env: EnvConfig, n: int = 20, seed: int = 0) -> float:
    """Mean episode return of uniformly random actions."""
    spec = make_spec(env)
    trs = rollout_batch(env, uniform_actor(spec.action_dim), spawn_generators(seed, n))
    return float(np.mean([tr.total_reward for tr in trs]))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    """CSV with ``\\n`` line ends and round-trippable floats; written via a
    temporary file so a half-written table never looks complete."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def read_table(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_curve(path) -> list[CurvePoint]:
    pts = []
    for r in read_table(path):
        pts.append(CurvePoint(seed=int(r["seed"]), iteration=int(r["iteration"]),
                              env_steps=int(r["env_steps"]), mean_return=float(r["mean_return"]),
                              normalized_score=float(r["normalized_score"]),
                              success_rate=float(r["success_rate"]), kl=float(r["kl"]),
                              wallclock_s=float(r["wallclock_s"]) if r["wallclock_s"] else None))
    return pts


def write_curve(path, points: Sequence[CurvePoint]) -> None:
    write_table(path, [vars(p) for p in points], CURVE_COLUMNS)


def curve_points(result: TrainResult, seed: int, random_baseline: float,
                 best: Optional[float], wallclock: bool) -> list[CurvePoint]:
    best = max(r.mean_return for r in result.curve) if best is None else best
    return [CurvePoint(seed=seed, iteration=r.iteration, env_steps=r.env_steps,
                       mean_return=r.mean_return,
                       normalized_score=float(normalize(r.mean_return, random_baseline, best)),
                       success_rate=r.success_rate, kl=r.kl,
                       wallclock_s=r.wallclock_s if wallclock else None)
            for r in result.curve]


def iterations_to_success(points: Sequence[CurvePoint]) -> Optional[int]:
    for p in points:
        if p.success_rate >= 1.0:
            return p.iteration
    return None


def censored(its: Sequence[Optional[int]], cap: int) -> np.ndarray:
    """Iterations-to-success with unsolved runs counted as ``cap``."""
    return np.array([cap if i is None else i for i in its], dtype=float)


# --------------------------------------------------------------------------
# experiments

def prepare_demos(cfg: ExperimentConfig) -> DemoSet:
    d = cfg.demos
    if d.file:
        return load_demos(d.file)
    env = cfg.env if d.wide_init is None else with_overrides(cfg.env, wide_init=d.wide_init)
    return collect_demos(env, n=d.count, slowdown=d.slowdown, action_noise=d.noise, seed=d.seed)


def resolve_random_baseline(cfg: ExperimentConfig) -> float:
    if cfg.score.random_baseline is not None:
        return cfg.score.random_baseline
    return random_policy_return(cfg.env, cfg.score.random_rollouts, seed=cfg.env.seed)


def run_cell(cfg: ExperimentConfig, seed: int, out: Path, demos: Optional[DemoSet] = None,
             random_baseline: Optional[float] = None) -> list[CurvePoint]:
    """Train one seed; writes ``curve_seed{s}.csv``, ``final_seed{s}.dexpol``
    and ``best_seed{s}.dexpol`` (rewritten at every evaluation improvement)."""
    out = Path(out)
    if random_baseline is None:
        random_baseline = resolve_random_baseline(cfg)
    best_key = [(-1.0, -np.inf)]

    def on_point(rep, policy: GaussianPolicy):
        key = (rep.success_rate, rep.eval_return)
        if key > best_key[0]:
            best_key[0] = key
            save_policy(policy, out / f"best_seed{seed}.dexpol")

    res = train(cfg.env, cfg.train, seed, demos=demos, callback=on_point)
    pts = curve_points(res, seed, random_baseline, cfg.score.best, cfg.record_wallclock)
    save_policy(res.policy, out / f"final_seed{seed}.dexpol")
    write_table(out / f"timing_seed{seed}.csv",
                [dict(iteration=r.iteration, wallclock_s=r.wallclock_s) for r in res.curve],
                ("iteration", "wallclock_s"))
    # the curve goes last: its presence marks the cell as complete
    write_curve(out / f"curve_seed{seed}.csv", pts)
    return pts


def summarize(out, seeds: Sequence[int], max_iters: int) -> list[dict]:
    """Per-seed rows plus median / q25 / q75 / iqr rows, recomputed from the
    curve files alone."""
    rows = []
    for s in seeds:
        pts = read_curve(Path(out) / f"curve_seed{s}.csv")
        its = iterations_to_success(pts)
        rows.append(dict(seed=s, iterations_to_success=its, solved=int(its is not None),
                         initial_success=pts[0].success_rate, final_success=pts[-1].success_rate,
                         final_return=pts[-1].mean_return))
    cols = {"iterations_to_success": censored([r["iterations_to_success"] for r in rows],
                                              max_iters + 1)}
    for c in ("solved", "initial_success", "final_success", "final_return"):
        cols[c] = np.array([r[c] for r in rows], dtype=float)
    stats = {"median": lambda a: np.median(a), "q25": lambda a: np.percentile(a, 25),
             "q75": lambda a: np.percentile(a, 75),
             "iqr": lambda a: np.percentile(a, 75) - np.percentile(a, 25)}
    for name, f in stats.items():
        rows.append({"seed": name, **{c: float(f(a)) for c, a in cols.items()}})
    return rows


def run_experiment(cfg: ExperimentConfig, resume: bool = False,
                   log: Optional[Callable[[str], None]] = None) -> Path:
    """Train every seed of ``cfg`` into ``cfg.output`` and write ``summary.csv``.

    A directory that already holds results is only reused with ``resume``,
    and then only for the same config; completed cells are skipped.
    """
    out = Path(cfg.output)
    text = cfg.to_text()
    stored = out / "config.txt"
    if out.exists() and any(out.iterdir()):
        if not resume:
            raise ExperimentExists(f"{out} is not empty (pass --resume to continue it)")
        if stored.exists() and stored.read_text() != text:
            raise ConfigError(f"{out} was produced by a different config")
    out.mkdir(parents=True, exist_ok=True)
    stored.write_text(text)
    demos = None
    if cfg.train.algo == "dapg":
        demos = prepare_demos(cfg)
        save_demos(demos, out / "demos.dexdemo")
    rb = resolve_random_baseline(cfg)
    for s in cfg.seeds:
        if resume and (out / f"curve_seed{s}.csv").exists():
            continue
        pts = run_cell(cfg, s, out, demos, rb)
        if log:
            its = iterations_to_success(pts)
            log(f"seed {s}: {len(pts) - 1} updates, success at {its}")
    npg = cfg.train.dapg.npg if cfg.train.algo == "dapg" else cfg.train.npg
    write_table(out / "summary.csv", summarize(out, cfg.seeds, npg.max_iters), SUMMARY_COLUMNS)
    return out


# --------------------------------------------------------------------------
# robustness

def observation_ranges(env: EnvConfig) -> np.ndarray:
    """Width of each observation dimension's nominal range."""
    sim = VecEnv(env, batch=1)
    nj = sim.nj
    joints = (sim.dof_hi - sim.dof_lo)[:nj]
    if env.task is Task.DOOR:
        obj = [DOOR_MAX, ARM_RANGE[1] - ARM_RANGE[0]]
    else:
        obj = [2 * np.pi, 2 * np.pi]
    return np.concatenate([joints, obj, np.full(sim.adim, 2.0)])


def uniform_noise(scale: np.ndarray):
    """Perturbation adding U(-scale, scale) per dimension from each lane's generator."""
    def perturb(x, rngs):
        return x + np.stack([g.uniform(-1.0, 1.0, len(scale)) for g in rngs]) * scale
    return perturb


def robustness_sweep(policy: GaussianPolicy, env: EnvConfig, axis: str, grid: Sequence[float],
                     n_rollouts: int = 10, seed: int = 0) -> list[dict]:
    """Success rate of the mean-action policy over a perturbation grid.

    ``init_angle`` values are initial object angles in degrees.
    ``obs_action_noise`` values are percentages: uniform noise within
    ±x/100 of each dimension's range is added to observations and actions.
    Every cell reuses the same episode seeds as ``evaluate(.., seed)``.
    """
    from .algos import policy_actor
    if len(grid) == 0:
        raise ValueError("empty grid")
    if axis not in ("init_angle", "obs_action_noise"):
        raise ValueError(f"unknown robustness axis {axis!r}")
    act = policy_actor(policy, deterministic=True)
    rows = []
    for x in grid:
        kw = {}
        if axis == "init_angle":
            kw["init_angle"] = np.deg2rad(x)
        elif x != 0:
            frac = x / 100.0
            kw["obs_noise"] = uniform_noise(frac * observation_ranges(env))
            kw["action_noise"] = uniform_noise(np.full(make_spec(env).action_dim, 2.0 * frac))
        trs = rollout_batch(env, act, spawn_generators(seed, n_rollouts), **kw)
        rows.append(dict(axis=axis, value=float(x),
                         success_rate=float(np.mean([success_from_dtheta(env.task, t.dtheta)
                                                     for t in trs])),
                         mean_return=float(np.mean([t.total_reward for t in trs]))))
    return rows


def monotone_trend(rows: Sequence[dict]) -> bool:
    """True when success never rises as the perturbation grows (reported only)."""
    s = [r["success_rate"] for r in sorted(rows, key=lambda r: abs(r["value"]))]
    return all(b <= a for a, b in zip(s, s[1:]))


# --------------------------------------------------------------------------
# actuation

def raw_vibration(env: EnvConfig, seeds: Sequence[int], k: int = 5) -> np.ndarray:
    """Per seed: vibration metric summed over joints of one random-action episode."""
    spec = make_spec(env)
    out = []
    for s in seeds:
        tr = rollout_batch(env, uniform_actor(spec.action_dim), spawn_generators(s, 1))[0]
        trace = tr.joint_trace(spec.n_joints)
        out.append(sum(vibration_metric(trace[:, j], k) for j in range(spec.n_joints)))
    return np.array(out)


def analysis_train_config(cfg: ExperimentConfig, iters: Optional[int] = None) -> TrainConfig:
    """Fixed-budget training (no early stop) used to compare variants."""
    iters = cfg.analysis.train_iters if iters is None else iters
    npg = replace(cfg.train.npg, max_iters=iters)
    return replace(cfg.train, algo="npg", npg=npg, stop_on_success=False)


def actuation_analysis(cfg: ExperimentConfig, schemes: Sequence[str] = tuple(a.value for a in Actuation),
                       n_seeds: Optional[int] = None, k: Optional[int] = None,
                       train_policies: Optional[bool] = None, seeds: Optional[Sequence[int]] = None,
                       log: Optional[Callable[[str], None]] = None) -> list[dict]:
    """Vibration of random rollouts under each actuation scheme, and
    optionally the return reached after a fixed training budget.

    ``vibration_score = 1 / (1 + raw)`` so that higher means smoother.
    """
    n_seeds = cfg.analysis.vibration_seeds if n_seeds is None else n_seeds
    k = cfg.analysis.fourier_k if k is None else k
    train_policies = cfg.analysis.train if train_policies is None else train_policies
    seeds = cfg.seeds if seeds is None else seeds
    rows = []
    for scheme in schemes:
        env = with_overrides(cfg.env, actuation=Actuation(scheme))
        raw = raw_vibration(env, range(n_seeds), k)
        med = float(np.median(raw))
        row = dict(scheme=scheme, raw_vibration=med, vibration_score=1.0 / (1.0 + med),
                   post_train_return=None)
        if train_policies:
            tc = analysis_train_config(cfg)
            rets = [train(env, tc, s).curve[-1].eval_return for s in seeds]
            row["post_train_return"] = float(np.median(rets))
        rows.append(row)
        if log:
            log(f"{scheme}: raw vibration {med:.3f}, return {row['post_train_return']}")
    return rows


# --------------------------------------------------------------------------
# reward shaping

def reward_ablation(cfg: ExperimentConfig, variants: Optional[Sequence[str]] = None,
                    seeds: Optional[Sequence[int]] = None, out: Optional[Path] = None,
                    log: Optional[Callable[[str], None]] = None) -> list[dict]:
    """Scratch NPG under each reward variant.  Success is always judged by
    the task angle criterion, whatever reward the learner saw."""
    if cfg.env.task is Task.DOOR:
        raise ValueError("reward ablation covers the valve and box tasks")
    variants = cfg.analysis.reward_variants if variants is None else variants
    seeds = cfg.seeds if seeds is None else seeds
    tc = replace(cfg.train, algo="npg")
    rb = resolve_random_baseline(cfg)
    rows = []
    for v in variants:
        env = with_overrides(cfg.env, reward_variant=v)
        its = []
        for s in seeds:
            res = train(env, tc, s)
            it = res.iterations_to_success
            its.append(it)
            if out is not None:
                write_curve(Path(out) / f"curve_{v}_seed{s}.csv",
                            curve_points(res, s, rb, cfg.score.best, cfg.record_wallclock))
            rows.append(dict(variant=v, seed=s, iterations_to_success=it, solved=int(it is not None)))
        med = float(np.median(censored(its, tc.npg.max_iters + 1)))
        rows.append(dict(variant=v, seed="median", iterations_to_success=med,
                         solved=sum(i is not None for i in its)))
        if log:
            log(f"{v}: iterations to success {its}, median {med}")
    return rows


# --------------------------------------------------------------------------
# dynamics randomization

def heldout_envs(cfg: ExperimentConfig) -> list[EnvConfig]:
    """Evaluation environments whose gains and friction are drawn from bands
    disjoint from the training range (one band below, one above)."""
    lo_t = min(cfg.env.randomization.gain_range[0], cfg.env.randomization.friction_range[0])
    hi_t = max(cfg.env.randomization.gain_range[1], cfg.env.randomization.friction_range[1])
    envs = []
    for band in (cfg.analysis.heldout_low, cfg.analysis.heldout_high):
        if not (band[1] <= lo_t or band[0] >= hi_t):
            raise ConfigError(f"held-out band {band} overlaps the training range")
        rnd = RandomizationConfig(variant="B", gain_range=band, friction_range=band)
        envs.append(with_overrides(cfg.env, randomization=rnd))
    return envs


def randomization_study(cfg: ExperimentConfig, variants: Optional[Sequence[str]] = None,
                        seeds: Optional[Sequence[int]] = None,
                        log: Optional[Callable[[str], None]] = None) -> list[dict]:
    """Train under each randomization variant, evaluate at nominal dynamics
    and on the held-out bands."""
    if cfg.env.task is not Task.VALVE:
        raise ValueError("the randomization study uses the valve task")
    variants = cfg.analysis.randomization_variants if variants is None else variants
    seeds = cfg.seeds if seeds is None else seeds
    nominal = with_overrides(cfg.env, randomization=RandomizationConfig(variant="A"))
    bands = heldout_envs(cfg)
    n = cfg.analysis.n_rollouts
    rows = []
    for v in variants:
        rnd = replace(cfg.env.randomization, variant=v)
        env = with_overrides(cfg.env, randomization=rnd)
        tc = replace(analysis_train_config(cfg), eval_env=None)
        for s in seeds:
            pol = train(env, tc, s).policy
            nom, _ = evaluate(pol, nominal, n, s)
            held = float(np.mean([evaluate(pol, b, n, s)[0] for b in bands]))
            rows.append(dict(variant=v, seed=s, nominal_success=nom, heldout_success=held))
        if log:
            got = [r["heldout_success"] for r in rows if r["variant"] == v]
            log(f"{v}: held-out success {got}")
    return rows
