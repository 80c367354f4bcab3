import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dexrl.algos import (DapgConfig, DegenerateCurvature, NpgConfig, TrainConfig,
                         behavior_cloning, dapg_gradient, demo_weight, evaluate, gaussian_kl,
                         npg_update, reinforce_gradient, train)
from dexrl.envs import EnvConfig
from dexrl.numkit import MlpParams
from dexrl.policy import (GaussianPolicy, log_prob, log_prob_grad, make_fvp, make_policy,
                          score_matrix)
from dexrl.rollout import Trajectory


def tiny(seed=0, obs=3, act=2, hidden=(4,)):
    rng = np.random.default_rng(seed)
    p = make_policy(obs, act, rng, hidden=hidden)
    return p.with_flat(rng.normal(scale=0.5, size=p.n_params))


def batch(policy, n_traj=3, T=5, seed=0):
    rng = np.random.default_rng(seed)
    trs = []
    for _ in range(n_traj):
        obs = rng.normal(size=(T, policy.obs_dim))
        act = rng.normal(size=(T, policy.action_dim))
        trs.append(Trajectory(obs=obs, actions=act, rewards=rng.normal(size=T),
                              log_probs=np.zeros(T), dtheta=np.zeros(T),
                              final_obs=np.zeros(policy.obs_dim), init_state=np.zeros(1)))
    adv = [rng.normal(size=T) for _ in range(n_traj)]
    return trs, adv


# ---------------------------------------------------------------- REINFORCE

def test_zero_advantages_zero_gradient():
    p = tiny()
    trs, adv = batch(p)
    assert not reinforce_gradient(p, trs, [np.zeros_like(a) for a in adv]).any()


def test_single_step_unit_advantage():
    p = tiny()
    trs, _ = batch(p, n_traj=1, T=1)
    g = reinforce_gradient(p, trs, [np.ones(1)])
    assert np.allclose(g, log_prob_grad(p, trs[0].obs[0], trs[0].actions[0]), atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_reinforce_matches_surrogate_finite_differences(seed):
    p = tiny(seed, hidden=(3,))
    trs, adv = batch(p, n_traj=2, T=3, seed=seed)
    obs = np.concatenate([t.obs for t in trs])
    act = np.concatenate([t.actions for t in trs])
    A = np.concatenate(adv)
    L = lambda th: np.mean(log_prob(p.with_flat(th), obs, act) * A)
    th = p.flat()
    num = np.array([(L(th + e) - L(th - e)) / 2e-6 for e in np.eye(len(th)) * 1e-6])
    g = reinforce_gradient(p, trs, adv)
    assert np.all(np.abs(g - num) <= 1e-5 * np.maximum(abs(g), abs(num)) + 1e-7)


def test_misaligned_advantages():
    p = tiny()
    trs, adv = batch(p)
    with pytest.raises(ValueError):
        reinforce_gradient(p, trs, adv[:-1])


# ---------------------------------------------------------------- DAPG

def test_dapg_weight_schedule():
    assert demo_weight([0.5, 2.0], 10, 0.1, 0.95) == pytest.approx(0.1 * 0.95 ** 10 * 2, abs=1e-12)
    assert demo_weight([0.5, 2.0], 10, 0.1, 0.95) == pytest.approx(0.1197, abs=1e-4)
    assert demo_weight([2.0], 0, 0.1, 1.0) == demo_weight([2.0], 50, 0.1, 1.0)


@settings(max_examples=50, deadline=None)
@given(k=st.integers(0, 200), lam1=st.floats(0.01, 1.0), maxa=st.floats(0, 10))
def test_dapg_weight_non_increasing(k, lam1, maxa):
    assert demo_weight([maxa], k + 1, 0.1, lam1) <= demo_weight([maxa], k, 0.1, lam1)


def test_dapg_lam0_zero_is_reinforce():
    p = tiny(2)
    trs, adv = batch(p)
    demos, _ = batch(p, seed=9)
    g = dapg_gradient(p, trs, adv, demos, 3, DapgConfig(lam0=0.0))
    assert np.array_equal(g, reinforce_gradient(p, trs, adv))


def test_dapg_adds_demo_term():
    p = tiny(2)
    trs, adv = batch(p)
    demos, _ = batch(p, n_traj=2, T=4, seed=9)
    cfg = DapgConfig(lam0=0.1, lam1=0.95)
    g = dapg_gradient(p, trs, adv, demos, 4, cfg)
    w = 0.1 * 0.95 ** 4 * np.max(np.concatenate(adv))
    dobs = np.concatenate([t.obs for t in demos])
    dact = np.concatenate([t.actions for t in demos])
    gd = score_matrix(p, dobs, dact).mean(axis=0)
    assert np.allclose(g, reinforce_gradient(p, trs, adv) + w * gd, atol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        DapgConfig(lam1=1.5)
    with pytest.raises(ValueError):
        NpgConfig(step_size=0.0)
    with pytest.raises(ValueError):
        TrainConfig(algo="ppo")


# ---------------------------------------------------------------- NPG step

def test_npg_zero_gradient():
    p = tiny()
    new, info = npg_update(p, np.zeros(p.n_params), lambda v: v, NpgConfig())
    assert np.array_equal(new.flat(), p.flat()) and info["alpha"] == 0.0


def test_npg_identity_fisher_hand_algebra():
    p = GaussianPolicy(MlpParams((1, 1), (np.zeros((1, 1)),), (np.zeros(1),)), np.array([-10.0]))
    # two live parameters (weight and bias); log_std is pinned at the clamp
    g = np.array([3.0, 4.0, 0.0])
    new, info = npg_update(p, g, lambda v: v, NpgConfig(step_size=0.5))
    assert info["alpha"] == pytest.approx(0.2)
    assert np.allclose(info["step"], [0.6, 0.8, 0.0])


def test_npg_degenerate_curvature():
    p = tiny()
    with pytest.raises(DegenerateCurvature):
        npg_update(p, np.ones(p.n_params), lambda v: -v, NpgConfig())


def dense_check(policy, n_states, cg_iters, seed):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(n_states, policy.obs_dim))
    fvp = make_fvp(policy, S, rng, damping=1e-8)
    G = score_matrix(policy, S, fvp.actions)
    F = G.T @ G / n_states + 1e-8 * np.eye(policy.n_params)
    g = G.T @ rng.normal(size=n_states) / n_states
    _, info = npg_update(policy, g, fvp, NpgConfig(step_size=0.05, cg_iters=cg_iters))
    x = np.linalg.solve(F, g)
    dense = np.sqrt(2 * 0.05 / (g @ x + 1e-12)) * x
    return np.max(np.abs(info["step"] - dense))


@pytest.mark.parametrize("seed", range(5))
def test_npg_matches_dense_solve_linear_mean(seed):
    p = make_policy(4, 2, np.random.default_rng(seed), hidden=())
    assert dense_check(p, 200, p.n_params, seed) < 1e-6


def test_npg_matches_dense_solve_hidden_layer():
    # a tanh layer makes the Fisher ill-conditioned (cond ~1e8), so the
    # Krylov solve is run to its residual tolerance rather than n steps
    p = make_policy(2, 1, np.random.default_rng(0), hidden=(3,), out_scale=1.0)
    assert dense_check(p, 400, 4 * p.n_params, 50) < 1e-6


def policy_gradient_like(policy, S, fvp, rng):
    G = score_matrix(policy, S, fvp.actions)
    return G.T @ rng.normal(size=len(S)) / len(S)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), hidden=st.sampled_from([(), (3,), (4, 3)]))
def test_npg_ascent_and_kl_near_delta(seed, hidden):
    rng = np.random.default_rng(seed)
    p = make_policy(3, 2, rng, hidden=hidden, out_scale=1.0)
    S = rng.normal(size=(400, 3))
    fvp = make_fvp(p, S, rng, damping=1e-4)
    g = policy_gradient_like(p, S, fvp, rng)
    cfg = NpgConfig(step_size=0.01)
    new, info = npg_update(p, g, fvp, cfg)
    assert g @ info["step"] >= 0
    kl = gaussian_kl(p, new, S)
    assert 0.5 * cfg.step_size <= kl <= 2 * cfg.step_size


# ---------------------------------------------------------------- behaviour cloning

def linear_demos(seed=0, obs=3, act=2, n=4, T=25):
    rng = np.random.default_rng(seed)
    M = rng.normal(scale=0.3, size=(obs, act))
    trs = []
    for _ in range(n):
        o = rng.normal(size=(T, obs))
        trs.append(Trajectory(obs=o, actions=o @ M, rewards=np.zeros(T), log_probs=np.zeros(T),
                              dtheta=np.zeros(T), final_obs=np.zeros(obs), init_state=np.zeros(1)))
    return trs


def test_bc_realizable_target():
    p = make_policy(3, 2, np.random.default_rng(0), hidden=(16,))
    demos = linear_demos()
    hist = []
    out = behavior_cloning(p, demos, epochs=400, step_size=2e-2, history=hist)
    obs = np.concatenate([t.obs for t in demos])
    act = np.concatenate([t.actions for t in demos])
    assert np.mean((out.mean_action(obs) - act) ** 2) < 1e-3
    assert min(hist) <= hist[0]
    assert np.array_equal(out.log_std, p.log_std)


def test_bc_noop_and_errors():
    p = make_policy(3, 2, np.random.default_rng(0))
    assert behavior_cloning(p, linear_demos(), epochs=0) is p
    with pytest.raises(ValueError):
        behavior_cloning(p, [], epochs=1)
    with pytest.raises(ValueError):
        behavior_cloning(p, linear_demos(obs=4), epochs=1)


# ---------------------------------------------------------------- training loop

SMALL = TrainConfig(npg=NpgConfig(n_traj=4, max_iters=3), hidden=(8,), baseline_epochs=5,
                    eval_rollouts=2, stop_on_success=False)
SHORT_ENV = EnvConfig(horizon=20)


def test_train_deterministic_and_curve_contract():
    a = train(SHORT_ENV, SMALL, seed=3, keep_params=True)
    b = train(SHORT_ENV, SMALL, seed=3, keep_params=True)
    assert all(np.array_equal(x, y) for x, y in zip(a.params, b.params))
    assert [r.mean_return for r in a.curve] == [r.mean_return for r in b.curve]
    assert [r.iteration for r in a.curve] == [0, 1, 2, 3]
    steps = [r.env_steps for r in a.curve]
    assert all(s2 > s1 for s1, s2 in zip(steps, steps[1:]))
    assert all(0 <= r.success_rate <= 1 for r in a.curve)
    assert a.curve[0].kl == 0.0 and all(r.kl > 0 for r in a.curve[1:])


def test_evaluation_uses_mean_action():
    pol = train(SHORT_ENV, SMALL, seed=0).policy
    wide = pol.with_flat(np.concatenate([pol.mean.flat(), np.full(6, 2.0)]))
    assert evaluate(pol, SHORT_ENV, 3, 7) == evaluate(wide, SHORT_ENV, 3, 7)


def test_dapg_requires_demos():
    with pytest.raises(ValueError):
        train(SHORT_ENV, TrainConfig(algo="dapg"), seed=0)


def test_callback_sees_every_point():
    seen = []
    res = train(SHORT_ENV, SMALL, seed=1, callback=lambda rep, pol: seen.append((rep, pol)))
    assert [r for r, _ in seen] == res.curve
    assert np.array_equal(seen[-1][1].flat(), res.policy.flat())
