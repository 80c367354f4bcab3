"""Policy-gradient learners: REINFORCE direction, truncated natural gradient
step, behaviour cloning, and the demonstration-augmented gradient (DAPG)."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .envs import EnvConfig, success_from_dtheta
from .numkit import conjugate_gradient
from .policy import (GaussianPolicy, compute_advantages, fit_baseline, make_baseline, make_fvp,
                     make_policy, weighted_score_sum)
from .rollout import Trajectory, rollout_batch

CURVATURE_EPS = 1e-12


class DegenerateCurvature(ArithmeticError):
    """g^T F^-1 g is not positive, so no natural step can be taken."""


@dataclass(frozen=True)
class NpgConfig:
    step_size: float = 0.05        # normalized KL step delta
    cg_iters: int = 10
    cg_damping: float = 1e-4
    n_traj: int = 40
    max_iters: int = 150

    def __post_init__(self):
        if self.step_size <= 0 or self.cg_iters < 1:
            raise ValueError("need step_size > 0 and cg_iters >= 1")


@dataclass(frozen=True)
class DapgConfig:
    lam0: float = 0.1
    lam1: float = 0.95
    bc_epochs: int = 100
    bc_step_size: float = 5e-3
    npg: NpgConfig = field(default_factory=NpgConfig)

    def __post_init__(self):
        if not 0.0 < self.lam1 <= 1.0:
            raise ValueError("lam1 must lie in (0, 1]")
        if self.lam0 < 0:
            raise ValueError("lam0 must be non-negative")


@dataclass
class UpdateReport:
    iteration: int
    env_steps: int
    mean_return: float
    success_rate: float
    eval_return: float
    train_success_rate: float = 0.0
    grad_norm: float = 0.0
    step_norm: float = 0.0
    kl: float = 0.0
    demo_weight: float = 0.0
    wallclock_s: float = 0.0
    skipped: bool = False


# --------------------------------------------------------------------------
# gradients

def _stack(trajectories):
    if not trajectories:
        raise ValueError("empty trajectory batch")
    obs = np.concatenate([tr.obs for tr in trajectories])
    act = np.concatenate([tr.actions for tr in trajectories])
    return obs, act


def reinforce_gradient(policy: GaussianPolicy, trajectories, advantages) -> np.ndarray:
    """``(1/M) sum_t grad log pi(a_t|s_t) A_t`` over all ``M`` steps of the batch."""
    obs, act = _stack(trajectories)
    adv = advantages.flat if hasattr(advantages, "flat") else np.concatenate(
        [np.asarray(a, dtype=float) for a in advantages])
    if adv.shape[0] != obs.shape[0]:
        raise ValueError("advantages are not aligned with the trajectories")
    return weighted_score_sum(policy, obs, act, adv) / obs.shape[0]


def demo_weight(advantages, k: int, lam0: float, lam1: float) -> float:
    adv = advantages.flat if hasattr(advantages, "flat") else np.asarray(advantages, dtype=float)
    return float(lam0 * lam1 ** k * np.max(adv))


def dapg_gradient(policy: GaussianPolicy, trajectories, advantages, demos, k: int,
                  config: DapgConfig) -> np.ndarray:
    """On-policy REINFORCE term plus the demonstration score term weighted by
    ``lam0 * lam1**k * max A``; each term is averaged over its own samples."""
    g = reinforce_gradient(policy, trajectories, advantages)
    w = demo_weight(advantages, k, config.lam0, config.lam1)
    if w == 0.0:
        return g
    dobs, dact = _stack(_demo_trajectories(demos))
    gd = weighted_score_sum(policy, dobs, dact, np.ones(len(dobs))) / len(dobs)
    return g + w * gd


def _demo_trajectories(demos):
    trs = getattr(demos, "trajectories", demos)
    if not trs:
        raise ValueError("empty demonstration set")
    return trs


# --------------------------------------------------------------------------
# natural gradient step

def gaussian_kl(old: GaussianPolicy, new: GaussianPolicy, states) -> float:
    """Mean over ``states`` of KL(old || new) between the action distributions."""
    mu0, mu1 = old.mean_action(states), new.mean_action(states)
    ls0, ls1 = old.log_std, new.log_std
    var0, var1 = np.exp(2 * ls0), np.exp(2 * ls1)
    kl = np.sum(ls1 - ls0 + (var0 + (mu0 - mu1) ** 2) / (2 * var1) - 0.5, axis=-1)
    return float(np.mean(kl))


def natural_direction(fvp: Callable, g: np.ndarray, config: NpgConfig) -> np.ndarray:
    return conjugate_gradient(fvp, g, max_iters=config.cg_iters, residual_tol=1e-10)


def npg_update(policy: GaussianPolicy, g: np.ndarray, fvp: Callable,
               config: NpgConfig) -> tuple[GaussianPolicy, dict]:
    """``theta + alpha x`` with ``F x = g`` solved by truncated Krylov
    iterations and ``alpha = sqrt(2 delta / (g^T x + eps))``."""
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite gradient")
    if not np.any(g):
        return policy, {"alpha": 0.0, "step": np.zeros_like(g), "gx": 0.0}
    x = natural_direction(fvp, g, config)
    gx = float(g @ x)
    if not gx > 0.0:
        raise DegenerateCurvature(f"g^T x = {gx:.3e}")
    alpha = float(np.sqrt(2.0 * config.step_size / (gx + CURVATURE_EPS)))
    step = alpha * x
    return policy.with_flat(policy.flat() + step), {"alpha": alpha, "step": step, "gx": gx}


# --------------------------------------------------------------------------
# behaviour cloning

def behavior_cloning(policy: GaussianPolicy, demos, epochs: int = 100, step_size: float = 5e-3,
                     batch_size: int = 64, rng: Optional[np.random.Generator] = None,
                     history: list | None = None) -> GaussianPolicy:
    """Fit the policy mean to demonstration actions by minibatch gradient
    descent with momentum 0.9; ``log_std`` is left untouched.

    Returns the parameters with the lowest full-batch MSE seen at an epoch
    boundary, so the final training error never exceeds the initial one.
    """
    obs, act = _stack(_demo_trajectories(demos))
    if obs.shape[1] != policy.obs_dim or act.shape[1] != policy.action_dim:
        raise ValueError("demonstration dimensions do not match the policy")
    if epochs <= 0:
        return policy
    rng = np.random.default_rng(0) if rng is None else rng
    from .numkit import mlp_backward, mlp_forward
    mean = policy.mean
    theta = mean.flat()
    vel = np.zeros_like(theta)
    n = len(obs)

    def mse(th):
        return float(np.mean((mlp_forward(mean.with_flat(th), obs) - act) ** 2))

    best, best_loss = theta.copy(), mse(theta)
    if history is not None:
        history.append(best_loss)
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            p = mean.with_flat(theta)
            err = mlp_forward(p, obs[idx]) - act[idx]
            g, _ = mlp_backward(p, obs[idx], 2.0 * err / err.size)
            vel = 0.9 * vel - step_size * g
            theta = theta + vel
        loss = mse(theta)
        if history is not None:
            history.append(loss)
        if loss <= best_loss:
            best, best_loss = theta.copy(), loss
    return GaussianPolicy(mean.with_flat(best), policy.log_std)


# --------------------------------------------------------------------------
# training loop

@dataclass(frozen=True)
class TrainConfig:
    algo: str = "npg"                     # "npg" (from scratch) or "dapg"
    npg: NpgConfig = field(default_factory=NpgConfig)
    dapg: DapgConfig = field(default_factory=DapgConfig)
    hidden: tuple[int, ...] = (64, 64)
    init_log_std: float = -0.5
    gae_lambda: float = 0.97
    normalize_adv: bool = True
    baseline_epochs: int = 40
    eval_rollouts: int = 10
    stop_on_success: bool = True
    # evaluation environment; defaults to the training environment
    eval_env: Optional[EnvConfig] = None

    def __post_init__(self):
        if self.algo not in ("npg", "dapg"):
            raise ValueError(f"unknown algorithm {self.algo!r}")


def policy_actor(policy: GaussianPolicy, deterministic: bool = False):
    std = np.exp(policy.log_std)
    const = -np.sum(policy.log_std) - policy.action_dim * 0.5 * np.log(2 * np.pi)

    def act(obs, rngs):
        mu = policy.mean_action(obs)
        if deterministic:
            return mu, np.full(len(mu), const)
        eps = np.stack([g.standard_normal(policy.action_dim) for g in rngs])
        return mu + std * eps, const - 0.5 * np.sum(eps ** 2, axis=1)
    return act


def evaluate(policy: GaussianPolicy, env: EnvConfig, n: int, seed) -> tuple[float, float]:
    """Success rate and mean return of the mean-action policy over ``n`` episodes."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(n)]
    trs = rollout_batch(env, policy_actor(policy, deterministic=True), rngs)
    succ = np.mean([success_from_dtheta(env.task, tr.dtheta) for tr in trs])
    return float(succ), float(np.mean([tr.total_reward for tr in trs]))


@dataclass
class TrainResult:
    policy: GaussianPolicy
    curve: list[UpdateReport]
    params: list[np.ndarray]

    @property
    def iterations_to_success(self) -> Optional[int]:
        for r in self.curve:
            if r.success_rate >= 1.0:
                return r.iteration
        return None


def train(env: EnvConfig, config: TrainConfig, seed: int, demos=None,
          keep_params: bool = False, callback=None) -> TrainResult:
    """Run scratch NPG or DAPG.

    Curve point ``k`` describes the policy after ``k`` updates: the mean
    return of the on-policy batch drawn from it and the success rate of its
    mean action over ``eval_rollouts`` fresh episodes.  Training stops at the
    first point with full success (if ``stop_on_success``) or after
    ``npg.max_iters`` updates.  ``callback(report, policy)`` sees every
    curve point together with the policy it describes.
    """
    if config.algo == "dapg" and demos is None:
        raise ValueError("DAPG needs demonstrations")
    npg = config.dapg.npg if config.algo == "dapg" else config.npg
    eval_env = config.eval_env or env
    root = np.random.SeedSequence(seed)
    init_ss, base_ss, bc_ss = root.spawn(3)
    from .envs import make_spec
    spec = make_spec(env)
    policy = make_policy(spec.obs_dim, spec.action_dim, np.random.default_rng(init_ss),
                         hidden=config.hidden, init_log_std=config.init_log_std)
    baseline = make_baseline(spec.obs_dim, env.horizon, np.random.default_rng(base_ss),
                             epochs=config.baseline_epochs)
    if config.algo == "dapg":
        policy = behavior_cloning(policy, demos, config.dapg.bc_epochs, config.dapg.bc_step_size,
                                  rng=np.random.default_rng(bc_ss))
    curve: list[UpdateReport] = []
    params: list[np.ndarray] = []
    t0 = time.perf_counter()
    env_steps = 0
    last = dict(grad_norm=0.0, step_norm=0.0, kl=0.0, demo_weight=0.0, skipped=False)
    for k in range(npg.max_iters + 1):
        if keep_params:
            params.append(policy.flat())
        it_ss = np.random.SeedSequence([seed, k])
        lanes_ss, fvp_ss, eval_ss = it_ss.spawn(3)
        rngs = [np.random.default_rng(s) for s in lanes_ss.spawn(npg.n_traj)]
        trs = rollout_batch(env, policy_actor(policy), rngs)
        env_steps += sum(len(tr) for tr in trs)
        succ, eval_ret = evaluate(policy, eval_env, config.eval_rollouts, eval_ss)
        rep = UpdateReport(iteration=k, env_steps=env_steps,
                           mean_return=float(np.mean([tr.total_reward for tr in trs])),
                           success_rate=succ, eval_return=eval_ret,
                           train_success_rate=float(np.mean(
                               [success_from_dtheta(env.task, tr.dtheta) for tr in trs])),
                           wallclock_s=time.perf_counter() - t0, **last)
        curve.append(rep)
        if callback is not None:
            callback(rep, policy)
        if (config.stop_on_success and succ >= 1.0) or k == npg.max_iters:
            break
        baseline = fit_baseline(baseline, trs, env.gamma)
        adv = compute_advantages(trs, baseline, env.gamma, config.gae_lambda, config.normalize_adv)
        if config.algo == "dapg":
            g = dapg_gradient(policy, trs, adv, demos, k, config.dapg)
            w = demo_weight(adv, k, config.dapg.lam0, config.dapg.lam1)
        else:
            g = reinforce_gradient(policy, trs, adv)
            w = 0.0
        states = np.concatenate([tr.obs for tr in trs])
        fvp = make_fvp(policy, states, np.random.default_rng(fvp_ss), npg.cg_damping)
        try:
            new, info = npg_update(policy, g, fvp, npg)
            kl = gaussian_kl(policy, new, states)
            last = dict(grad_norm=float(np.linalg.norm(g)),
                        step_norm=float(np.linalg.norm(info["step"])),
                        kl=kl, demo_weight=w, skipped=False)
            policy = new
        except DegenerateCurvature:
            last = dict(grad_norm=float(np.linalg.norm(g)), step_norm=0.0, kl=0.0,
                        demo_weight=w, skipped=True)
    return TrainResult(policy, curve, params)
