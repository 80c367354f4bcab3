import numpy as np
import pytest

from dexrl.demos import (DEFAULT_DEMOS, DemoConfigError, DemoDimensionError, DemoFileError,
                         DemoSet, DemoTruncatedError, DemoVersionError, ExpertFailure,
                         collect_demos, load_demos, save_demos, scripted_expert, verify_demos)
from dexrl.envs import WIDE_INIT, EnvConfig, success
from dexrl.rollout import Trajectory, replay

VALVE = EnvConfig()
BOX = EnvConfig(task="box")


@pytest.fixture(scope="module")
def valve_demos():
    return collect_demos(VALVE, n=4, seed=11)


def random_demoset(seed=0, n=3, T=7, obs=14, act=6, state=29):
    rng = np.random.default_rng(seed)
    trs = [Trajectory(obs=rng.normal(size=(T, obs)), actions=rng.normal(size=(T, act)),
                      rewards=rng.normal(size=T), log_probs=np.zeros(T), dtheta=rng.normal(size=T),
                      final_obs=rng.normal(size=obs), init_state=rng.normal(size=state))
           for _ in range(n)]
    return DemoSet(trs, task="valve", config_hash="0123456789abcdef", expert="scripted",
                   seed=seed, allow_failed=True)


# ---------------------------------------------------------------- expert

@pytest.mark.parametrize("cfg", [VALVE, BOX], ids=["valve", "box"])
def test_expert_succeeds_with_default_knobs(cfg):
    wins = [success(cfg.task, scripted_expert(cfg, 2.0, 0.05, rng=np.random.default_rng(s),
                                              allow_failed=True)) for s in range(6)]
    assert all(wins)


def test_expert_deterministic_without_noise():
    a = scripted_expert(VALVE, 2.0, 0.0, rng=np.random.default_rng(1))
    b = scripted_expert(VALVE, 2.0, 0.0, rng=np.random.default_rng(1))
    assert a.equals(b)


def test_expert_rejects_bad_requests():
    with pytest.raises(ValueError):
        scripted_expert(EnvConfig(task="door"))
    with pytest.raises(ValueError):
        scripted_expert(EnvConfig(actuation="torque"))
    with pytest.raises(ValueError):
        scripted_expert(VALVE, slowdown=0.5)


def test_expert_failure_reports_attempts():
    with pytest.raises(ExpertFailure) as err:
        scripted_expert(VALVE, 2.0, 1.0, rng=np.random.default_rng(0), max_attempts=2)
    assert err.value.attempts == 2


def test_default_demo_count():
    assert DEFAULT_DEMOS == 20


# ---------------------------------------------------------------- collection

def test_fixed_init_demos_start_at_zero(valve_demos):
    assert len(valve_demos) == 4
    for tr in valve_demos.trajectories:
        assert tr.obs[0, 6] == 0.0
        assert success("valve", tr)


def test_wide_init_demos_in_range():
    d = collect_demos(VALVE, n=4, wide_init=True, seed=2)
    assert d.wide_init
    starts = [tr.obs[0, 6] for tr in d.trajectories]
    assert all(abs(s) <= WIDE_INIT for s in starts) and np.ptp(starts) > 0


def test_collect_needs_positive_count():
    with pytest.raises(ValueError):
        collect_demos(VALVE, n=0)


def test_demos_replay_exactly(valve_demos):
    assert verify_demos(valve_demos, VALVE) == []
    tr = valve_demos.trajectories[0]
    rep = replay(VALVE, tr.init_state, tr.actions)
    assert np.array_equal(rep.obs, tr.obs) and np.array_equal(rep.rewards, tr.rewards)


def test_verify_flags_tampering(valve_demos):
    tr = valve_demos.trajectories[0]
    bad = Trajectory(obs=tr.obs, actions=tr.actions[::-1].copy(), rewards=tr.rewards,
                     log_probs=tr.log_probs, dtheta=tr.dtheta, final_obs=tr.final_obs,
                     init_state=tr.init_state)
    d = DemoSet([bad], task="valve", config_hash=VALVE.digest())
    assert any("diverges" in p for p in verify_demos(d, VALVE))


# ---------------------------------------------------------------- file format

def test_round_trip(tmp_path, valve_demos):
    save_demos(valve_demos, tmp_path / "d.dexdemo")
    back = load_demos(tmp_path / "d.dexdemo", expect=VALVE)
    assert back.equals(valve_demos)
    save_demos(back, tmp_path / "e.dexdemo")
    assert (tmp_path / "d.dexdemo").read_bytes() == (tmp_path / "e.dexdemo").read_bytes()


def test_round_trip_random(tmp_path):
    d = random_demoset(5)
    save_demos(d, tmp_path / "r.dexdemo")
    assert load_demos(tmp_path / "r.dexdemo").equals(d)


def test_header_line(tmp_path, valve_demos):
    save_demos(valve_demos, tmp_path / "d.dexdemo")
    head = (tmp_path / "d.dexdemo").read_bytes().split(b"\n", 1)[0].decode()
    assert head == f"DEXDEMO v1 valve 14 6 4 {VALVE.digest()}"


def test_truncated_file(tmp_path, valve_demos):
    save_demos(valve_demos, tmp_path / "d.dexdemo")
    raw = (tmp_path / "d.dexdemo").read_bytes()
    for cut in (10, len(raw) // 2, len(raw) - 8):
        (tmp_path / "t.dexdemo").write_bytes(raw[:cut])
        with pytest.raises(DemoTruncatedError):
            load_demos(tmp_path / "t.dexdemo")


def test_corrupted_length_field(tmp_path):
    d = random_demoset(1)
    save_demos(d, tmp_path / "d.dexdemo")
    raw = bytearray((tmp_path / "d.dexdemo").read_bytes())
    off = raw.index(b"\n", raw.index(b"\n") + 1) + 1
    raw[off:off + 8] = (10 ** 6).to_bytes(8, "little")
    (tmp_path / "c.dexdemo").write_bytes(bytes(raw))
    with pytest.raises(DemoTruncatedError):
        load_demos(tmp_path / "c.dexdemo")


def test_version_mismatch(tmp_path, valve_demos):
    save_demos(valve_demos, tmp_path / "d.dexdemo")
    raw = (tmp_path / "d.dexdemo").read_bytes().replace(b"DEXDEMO v1", b"DEXDEMO v2", 1)
    (tmp_path / "v.dexdemo").write_bytes(raw)
    with pytest.raises(DemoVersionError):
        load_demos(tmp_path / "v.dexdemo")
    (tmp_path / "x.dexdemo").write_bytes(b"NOTDEMO v1\n")
    with pytest.raises(DemoFileError):
        load_demos(tmp_path / "x.dexdemo")


def test_cross_task_and_config_checks(tmp_path, valve_demos):
    save_demos(valve_demos, tmp_path / "d.dexdemo")
    with pytest.raises(DemoDimensionError):
        load_demos(tmp_path / "d.dexdemo", expect=EnvConfig(fingers=4))
    with pytest.raises(DemoDimensionError):
        load_demos(tmp_path / "d.dexdemo", expect=EnvConfig(task="door"))
    with pytest.raises(DemoConfigError):
        load_demos(tmp_path / "d.dexdemo", expect=EnvConfig(dt=0.04))


def test_demoset_rejects_mixed_dimensions():
    a = random_demoset(0).trajectories[0]
    b = random_demoset(1, obs=18, act=8).trajectories[0]
    with pytest.raises(ValueError):
        DemoSet([a, b], task="valve", config_hash="x")
