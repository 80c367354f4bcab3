"""Trajectories and batched episode collection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .envs import EnvConfig, EnvModel, VecEnv


@dataclass
class Trajectory:
    """One episode.

    ``obs[t]`` is the observation the action ``actions[t]`` was chosen from;
    ``final_obs`` follows the last step.  ``dtheta[t]`` is the task angle error
    after step ``t`` and ``init_state`` the physical state right after reset,
    which is all that is needed to replay the episode.
    """
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    log_probs: np.ndarray
    dtheta: np.ndarray
    final_obs: np.ndarray
    init_state: np.ndarray
    states: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))

    def joint_trace(self, n_joints: int) -> np.ndarray:
        """Joint angles over time, (T + 1, n_joints)."""
        return np.vstack([self.obs[:, :n_joints], self.final_obs[None, :n_joints]])

    def equals(self, other: "Trajectory") -> bool:
        names = ("obs", "actions", "rewards", "log_probs", "dtheta", "final_obs", "init_state")
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in names)


def spawn_generators(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent generators derived from ``seed`` (an int or SeedSequence)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n)]


# An actor maps (obs batch, per-lane generators) to (actions, log_probs).
Actor = Callable[[np.ndarray, Sequence[np.random.Generator]], tuple[np.ndarray, np.ndarray]]


def rollout_batch(config: EnvConfig, actor: Actor, rngs: Sequence[np.random.Generator],
                  steps: Optional[int] = None, init_angle: Optional[float] = None,
                  obs_noise: Optional[Callable[[np.ndarray, Sequence[np.random.Generator]], np.ndarray]] = None,
                  action_noise: Optional[Callable[[np.ndarray, Sequence[np.random.Generator]], np.ndarray]] = None,
                  record_states: bool = False) -> list[Trajectory]:
    """Run one episode per generator; every lane draws only from its own generator."""
    steps = config.horizon if steps is None else steps
    sim = VecEnv(config, batch=len(rngs))
    obs = sim.reset(list(rngs))
    if init_angle is not None:
        obs = sim.set_object_angle(init_angle)
    init = sim.get_state()
    B = len(rngs)
    O = np.zeros((B, steps, sim.spec.obs_dim))
    A = np.zeros((B, steps, sim.spec.action_dim))
    R = np.zeros((B, steps))
    L = np.zeros((B, steps))
    D = np.zeros((B, steps))
    S = np.zeros((B, steps + 1, sim.spec.state_dim)) if record_states else None
    if S is not None:
        S[:, 0] = init
    for t in range(steps):
        seen = obs if obs_noise is None else obs_noise(obs, rngs)
        a, lp = actor(seen, rngs)
        O[:, t], A[:, t], L[:, t] = seen, a, lp
        applied = a if action_noise is None else action_noise(a, rngs)
        obs, rew, info = sim.step(applied)
        R[:, t] = rew
        D[:, t] = info["dtheta"]
        if S is not None:
            S[:, t + 1] = sim.get_state()
    return [Trajectory(obs=O[i], actions=A[i], rewards=R[i], log_probs=L[i], dtheta=D[i],
                       final_obs=obs[i].copy(), init_state=init[i].copy(),
                       states=None if S is None else S[i])
            for i in range(B)]


def uniform_actor(action_dim: int) -> Actor:
    logp = -action_dim * np.log(2.0)

    def act(obs, rngs):
        a = np.stack([g.uniform(-1.0, 1.0, action_dim) for g in rngs])
        return a, np.full(len(rngs), logp)
    return act


def random_policy_rollout(env: EnvModel, steps: Optional[int] = None,
                          rng: Optional[np.random.Generator] = None) -> Trajectory:
    """Episode under actions drawn uniformly from ``[-1, 1]^action_dim``."""
    rng = env.rng if rng is None else rng
    return rollout_batch(env.config, uniform_actor(env.spec.action_dim), [rng], steps)[0]


def replay(config: EnvConfig, init_state: np.ndarray, actions: np.ndarray) -> Trajectory:
    """Re-run stored actions from a stored initial state (no randomness involved)."""
    sim = VecEnv(config, batch=1)
    sim.reset([np.random.default_rng(0)])
    obs = sim.set_state(init_state[None, :])
    T = len(actions)
    O = np.zeros((T, sim.spec.obs_dim))
    R = np.zeros(T)
    D = np.zeros(T)
    for t in range(T):
        O[t] = obs[0]
        obs, rew, info = sim.step(actions[t][None, :])
        R[t] = rew[0]
        D[t] = info["dtheta"][0]
    return Trajectory(obs=O, actions=np.asarray(actions, dtype=float).copy(), rewards=R,
                      log_probs=np.zeros(T), dtheta=D, final_obs=obs[0].copy(),
                      init_state=np.asarray(init_state, dtype=float).copy())
