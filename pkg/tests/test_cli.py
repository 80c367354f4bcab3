import subprocess
import sys

import pytest

from dexrl import bench
from dexrl.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

FAST = ["--env.horizon", "20", "--train.hidden", "8", "--train.baseline_epochs", "3",
        "--train.eval_rollouts", "2", "--npg.n_traj", "3", "--npg.max_iters", "1",
        "--experiment.seeds", "0", "--score.random_rollouts", "2"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    assert main(["train", *FAST, "--experiment.output", str(out)]) == EXIT_OK
    return out


def test_train_writes_artifacts(run_dir):
    assert (run_dir / "curve_seed0.csv").exists() and (run_dir / "summary.csv").exists()


def test_train_refuses_existing_dir(run_dir, capsys):
    assert main(["train", *FAST, "--experiment.output", str(run_dir)]) == EXIT_CONFIG
    assert "--resume" in capsys.readouterr().err
    assert main(["train", *FAST, "--experiment.output", str(run_dir), "--resume"]) == EXIT_OK


def test_config_file_and_errors(tmp_path):
    good = tmp_path / "good.cfg"
    good.write_text(f"experiment.output = {tmp_path / 'o'}\nenv.horizon = 20\nnpg.max_iters = 1\n"
                    "npg.n_traj = 2\ntrain.eval_rollouts = 1\nexperiment.seeds = 3\n"
                    "score.random_rollouts = 2\ntrain.hidden = 4\n")
    assert main(["train", "--config", str(good)]) == EXIT_OK
    assert bench.load_config(tmp_path / "o" / "config.txt").seeds == (3,)
    bad = tmp_path / "bad.cfg"
    bad.write_text("env.flavour = sour\n")
    assert main(["train", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["train", "--env.fingers", "7"]) == EXIT_CONFIG


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["train", "--env.flavour", "sour"])
    assert err.value.code == 2


def test_eval(run_dir, capsys):
    ckpt = run_dir / "final_seed0.dexpol"
    assert main(["eval", "--checkpoint", str(ckpt), "--env.horizon", "20", "--n", "2"]) == EXIT_OK
    assert "success_rate=" in capsys.readouterr().out
    assert main(["eval", "--checkpoint", str(run_dir / "nope.dexpol")]) == EXIT_RUNTIME
    # a horizon-20 policy on a 4-finger hand does not fit
    assert main(["eval", "--checkpoint", str(ckpt), "--env.fingers", "4"]) == EXIT_RUNTIME


def test_demos_record_and_verify(tmp_path, capsys):
    path = tmp_path / "d.dexdemo"
    assert main(["demos", "record", "--out", str(path), "--demos.count", "2"]) == EXIT_OK
    assert main(["demos", "verify", str(path)]) == EXIT_OK
    assert "0 problems" in capsys.readouterr().out
    raw = path.read_bytes()
    path.write_bytes(raw[:-100])
    assert main(["demos", "verify", str(path)]) == EXIT_RUNTIME
    path.write_bytes(raw)
    assert main(["demos", "verify", str(path), "--env.task", "box"]) == EXIT_CONFIG


def test_analyze_robustness(run_dir, tmp_path):
    out = tmp_path / "rob.csv"
    assert main(["analyze", "robustness", "--checkpoint", str(run_dir / "final_seed0.dexpol"),
                 "--env.horizon", "20", "--analysis.n_rollouts", "2", "--axis", "init_angle",
                 "--analysis.init_angles=-10,0,10", "--out", str(out)]) == EXIT_OK
    rows = bench.read_table(out)
    assert [r["value"] for r in rows] == ["-10.0", "0.0", "10.0"]


def test_analyze_actuation(tmp_path):
    out = tmp_path / "act.csv"
    assert main(["analyze", "actuation", "--analysis.vibration_seeds", "2",
                 "--out", str(out)]) == EXIT_OK
    assert len(bench.read_table(out)) == 4


def test_analyze_rewards_and_randomization(tmp_path):
    for name in ("rewards", "randomization"):
        out = tmp_path / f"{name}.csv"
        args = ["analyze", name, *FAST, "--analysis.train_iters", "1",
                "--analysis.n_rollouts", "1", "--analysis.reward_variants", "r1",
                "--analysis.randomization_variants", "B", "--out", str(out)]
        assert main(args) == EXIT_OK
        assert len(bench.read_table(out)) >= 1
    args = ["analyze", "randomization", *FAST, "--env.task", "box", "--out", str(tmp_path / "x")]
    assert main(args) == EXIT_RUNTIME


def test_report(run_dir, tmp_path):
    out = tmp_path / "report.csv"
    assert main(["report", str(run_dir), "--out", str(out)]) == EXIT_OK
    rows = bench.read_table(out)
    top = max(rows, key=lambda r: float(r["mean_return"]))
    assert float(top["normalized_score"]) == 1.0
    assert main(["report", str(tmp_path)]) == EXIT_CONFIG


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dexrl", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("train", "eval", "demos", "analyze", "report"):
        assert cmd in res.stdout
