from dataclasses import replace

import numpy as np
import pytest

from dexrl import bench
from dexrl.algos import evaluate, train
from dexrl.envs import ConfigError
from dexrl.policy import load_policy

TINY = """
# a seconds-scale experiment
experiment.id = tiny
experiment.seeds = 0, 1
env.horizon = 20
train.hidden = 8
train.baseline_epochs = 5
train.eval_rollouts = 3
npg.n_traj = 4
npg.max_iters = 2
score.random_rollouts = 4
demos.count = 2
analysis.n_rollouts = 3
analysis.vibration_seeds = 3
analysis.train_iters = 1
"""


def tiny(tmp_path, name="run", **over):
    cfg = bench.parse_config(TINY + f"experiment.output = {tmp_path / name}\n")
    return bench.apply_overrides(cfg, over) if over else cfg


# ---------------------------------------------------------------- config

def test_every_key_has_a_default_and_round_trips():
    cfg = bench.ExperimentConfig()
    assert set(bench.flatten(cfg)) == set(bench.KEYS)
    assert bench.parse_config(cfg.to_text()) == cfg
    assert bench.parse_config("") == cfg


def test_parse_values(tmp_path):
    cfg = tiny(tmp_path)
    assert cfg.seeds == (0, 1) and cfg.env.horizon == 20 and cfg.train.hidden == (8,)
    assert cfg.train.dapg.npg == cfg.train.npg
    assert bench.parse_config(cfg.to_text()) == cfg


@pytest.mark.parametrize("text", [
    "env.tsk = valve",               # unknown key
    "npg.step = 0.1",
    "env.task valve",                # no '='
    "task = valve",                  # no section
    "env.task = teapot",             # bad value
    "env.fingers = three",
    "npg.step_size = -1",
    "env.wide_init = maybe",
    "analysis.reward_variants = r1,r7",
    "env.task = valve\nenv.task = box",
])
def test_strict_parsing(text):
    with pytest.raises(ConfigError):
        bench.parse_config(text)


def test_overrides_reject_unknown_keys():
    with pytest.raises(ConfigError):
        bench.apply_overrides(bench.ExperimentConfig(), {"env.colour": "red"})
    cfg = bench.apply_overrides(bench.ExperimentConfig(), {"env.task": "box", "demos.wide_init": "true"})
    assert cfg.env.task.value == "box" and cfg.demos.wide_init is True


# ---------------------------------------------------------------- scores

def pts(returns):
    return [bench.CurvePoint(0, i, 10 * (i + 1), r, 0.0, 0.0, 0.0) for i, r in enumerate(returns)]


def test_normalize_scores_anchors():
    out = bench.normalize_scores(pts([-50.0, 100.0, 25.0]), -50.0, 100.0)
    assert [p.normalized_score for p in out] == [0.0, 1.0, 0.5]


def test_normalize_scores_idempotent_and_nested():
    curves = [pts([1.0, 2.0]), pts([3.0])]
    once = bench.normalize_scores(curves, 0.5, 4.0)
    assert bench.normalize_scores(once, 0.5, 4.0) == once
    assert len(once) == 2 and len(once[0]) == 2


def test_normalize_rejects_equal_anchors():
    with pytest.raises(ValueError):
        bench.normalize_scores(pts([1.0]), 2.0, 2.0)


# ---------------------------------------------------------------- experiments

def test_run_experiment_outputs(tmp_path):
    cfg = tiny(tmp_path)
    out = bench.run_experiment(cfg)
    names = {p.name for p in out.iterdir()}
    for s in (0, 1):
        assert {f"curve_seed{s}.csv", f"final_seed{s}.dexpol", f"best_seed{s}.dexpol"} <= names
    assert {"summary.csv", "config.txt"} <= names
    header = (out / "curve_seed0.csv").read_text().splitlines()[0]
    assert header == ",".join(bench.CURVE_COLUMNS)
    curve = bench.read_curve(out / "curve_seed0.csv")
    steps = [p.env_steps for p in curve]
    assert all(b > a for a, b in zip(steps, steps[1:]))
    assert all(p.wallclock_s is None for p in curve)
    assert load_policy(out / "final_seed0.dexpol").obs_dim == 14


def test_rerun_is_byte_identical(tmp_path):
    a = bench.run_experiment(tiny(tmp_path, "a"))
    b = bench.run_experiment(tiny(tmp_path, "b"))
    for name in ("curve_seed0.csv", "curve_seed1.csv", "summary.csv", "final_seed1.dexpol"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_summary_matches_recomputation(tmp_path):
    cfg = tiny(tmp_path)
    out = bench.run_experiment(cfg)
    rows = bench.summarize(out, cfg.seeds, cfg.train.npg.max_iters)
    bench.write_table(tmp_path / "again.csv", rows, bench.SUMMARY_COLUMNS)
    assert (tmp_path / "again.csv").read_bytes() == (out / "summary.csv").read_bytes()
    stats = {r["seed"]: r for r in bench.read_table(out / "summary.csv")}
    its = [float(r["iterations_to_success"] or cfg.train.npg.max_iters + 1)
           for r in bench.read_table(out / "summary.csv")[:2]]
    assert float(stats["median"]["iterations_to_success"]) == np.median(its)


def test_existing_directory_needs_resume(tmp_path):
    cfg = tiny(tmp_path)
    out = bench.run_experiment(cfg)
    with pytest.raises(bench.ExperimentExists):
        bench.run_experiment(cfg)
    before = (out / "curve_seed0.csv").stat().st_mtime_ns
    (out / "curve_seed1.csv").unlink()
    bench.run_experiment(cfg, resume=True)
    assert (out / "curve_seed0.csv").stat().st_mtime_ns == before
    assert (out / "curve_seed1.csv").exists()
    with pytest.raises(ConfigError):
        bench.run_experiment(replace(cfg, seeds=(0, 1, 2)), resume=True)


def test_dapg_summary_has_bc_success(tmp_path):
    cfg = tiny(tmp_path, **{"train.algo": "dapg", "dapg.bc_epochs": "2", "env.horizon": "100",
                            "experiment.seeds": "0"})
    out = bench.run_experiment(cfg)
    assert (out / "demos.dexdemo").exists()
    rows = bench.read_table(out / "summary.csv")
    first = bench.read_curve(out / "curve_seed0.csv")[0]
    assert float(rows[0]["initial_success"]) == first.success_rate


def test_wallclock_recorded_on_request(tmp_path):
    cfg = tiny(tmp_path, **{"experiment.record_wallclock": "true", "experiment.seeds": "0"})
    out = bench.run_experiment(cfg)
    assert all(p.wallclock_s is not None for p in bench.read_curve(out / "curve_seed0.csv"))


# ---------------------------------------------------------------- analyses

@pytest.fixture(scope="module")
def small_policy():
    cfg = bench.parse_config(TINY)
    return train(cfg.env, cfg.train, 0).policy, cfg


def test_robustness_null_perturbations_match_evaluation(small_policy):
    pol, cfg = small_policy
    nominal = evaluate(pol, cfg.env, 4, 3)
    noise = bench.robustness_sweep(pol, cfg.env, "obs_action_noise", [0, 10], 4, seed=3)
    angle = bench.robustness_sweep(pol, cfg.env, "init_angle", [-15, 0, 15], 4, seed=3)
    assert (noise[0]["success_rate"], noise[0]["mean_return"]) == nominal
    assert (angle[1]["success_rate"], angle[1]["mean_return"]) == nominal
    assert noise[1]["mean_return"] != nominal[1]
    assert isinstance(bench.monotone_trend(noise), bool)


def test_robustness_rejects_bad_input(small_policy):
    pol, cfg = small_policy
    with pytest.raises(ValueError):
        bench.robustness_sweep(pol, cfg.env, "init_angle", [])
    with pytest.raises(ValueError):
        bench.robustness_sweep(pol, cfg.env, "gravity", [1])


def test_noise_scale_follows_ranges():
    r = bench.observation_ranges(bench.ExperimentConfig().env)
    assert r.shape == (14,)
    assert np.allclose(r[:6], np.pi) and np.allclose(r[-6:], 2.0)


def test_actuation_analysis_deterministic(tmp_path):
    cfg = tiny(tmp_path)
    a = bench.actuation_analysis(cfg)
    b = bench.actuation_analysis(cfg)
    assert a == b
    assert [r["scheme"] for r in a] == ["position", "position_delta", "torque", "torque_delta"]
    for r in a:
        assert r["vibration_score"] == pytest.approx(1 / (1 + r["raw_vibration"]))
    trained = bench.actuation_analysis(cfg, schemes=["position"], train_policies=True, seeds=[0])
    assert trained[0]["post_train_return"] is not None


def test_reward_ablation_rows(tmp_path):
    cfg = tiny(tmp_path, **{"experiment.seeds": "0"})
    rows = bench.reward_ablation(cfg, variants=["r1", "r3"], out=tmp_path)
    assert [(r["variant"], r["seed"]) for r in rows] == [("r1", 0), ("r1", "median"),
                                                          ("r3", 0), ("r3", "median")]
    assert (tmp_path / "curve_r3_seed0.csv").exists()
    with pytest.raises(ValueError):
        bench.reward_ablation(bench.apply_overrides(cfg, {"env.task": "door"}))


def test_heldout_bands_exclude_training_range(tmp_path):
    cfg = tiny(tmp_path)
    for env in bench.heldout_envs(cfg):
        lo, hi = env.randomization.gain_range
        assert hi <= 0.7 or lo >= 1.3
    with pytest.raises(ConfigError):
        bench.heldout_envs(bench.apply_overrides(cfg, {"analysis.heldout_low": "0.6,0.8"}))


def test_randomization_study_rows(tmp_path):
    cfg = tiny(tmp_path, **{"experiment.seeds": "0"})
    rows = bench.randomization_study(cfg, variants=["A", "B"])
    assert [r["variant"] for r in rows] == ["A", "B"]
    assert all(0 <= r["heldout_success"] <= 1 for r in rows)
    # variant A at nominal dynamics is the standard evaluation
    tc = bench.analysis_train_config(cfg)
    pol = train(cfg.env, tc, 0).policy
    assert rows[0]["nominal_success"] == evaluate(pol, cfg.env, cfg.analysis.n_rollouts, 0)[0]
