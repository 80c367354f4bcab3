"""Scripted demonstrations and the DEXDEMO v1 file format.

The scripted expert stands in for kinesthetic teaching.  It is a finger
gait: fingers grip paddles near the back of their reach and drag them round,
tuck inside the paddle circle once a paddle leaves reach, swing back and grip
again, so fingers alternately move in and out.  It is deliberately
suboptimal: it settles a little short of the goal (``shortfall``) and its
repositioning moves are slowed by ``slowdown``.  ``action_noise`` adds
uniform noise to every command.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .envs import (JOINT_LIMIT, LINK1, LINK2, EnvConfig, Task, VecEnv, make_spec,
                   success_from_dtheta)
from .rollout import Trajectory

DEFAULT_DEMOS = 20


class ExpertFailure(RuntimeError):
    """The scripted expert could not produce a successful episode."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} after {attempts} attempt(s)")
        self.attempts = attempts


class DemoFileError(ValueError):
    """Base class of demo-file load errors."""


class DemoVersionError(DemoFileError):
    pass


class DemoTruncatedError(DemoFileError):
    pass


class DemoDimensionError(DemoFileError):
    pass


class DemoConfigError(DemoFileError):
    pass


@dataclass
class DemoSet:
    trajectories: list[Trajectory]
    task: str
    config_hash: str
    expert: str = "scripted"
    seed: int = 0
    wide_init: bool = False
    allow_failed: bool = False
    state_dim: int = 0

    def __post_init__(self):
        if self.trajectories:
            o = {tr.obs.shape[1] for tr in self.trajectories}
            a = {tr.actions.shape[1] for tr in self.trajectories}
            if len(o) != 1 or len(a) != 1:
                raise ValueError("demonstrations disagree on obs/action dimensions")
            if not self.state_dim:
                self.state_dim = self.trajectories[0].init_state.shape[0]

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def count(self) -> int:
        return len(self.trajectories)

    @property
    def obs_dim(self) -> int:
        return self.trajectories[0].obs.shape[1]

    @property
    def action_dim(self) -> int:
        return self.trajectories[0].actions.shape[1]

    def equals(self, other: "DemoSet") -> bool:
        meta = ("task", "config_hash", "expert", "seed", "wide_init", "allow_failed", "state_dim")
        return (all(getattr(self, k) == getattr(other, k) for k in meta)
                and len(self) == len(other)
                and all(a.equals(b) for a, b in zip(self.trajectories, other.trajectories)))


# --------------------------------------------------------------------------
# scripted expert

def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def finger_ik(sim: VecEnv, finger: int, target: np.ndarray) -> np.ndarray:
    """Joint angles (q1, q2) placing fingertip ``finger`` at ``target`` (elbow on the neutral side)."""
    geo = sim.geometry
    rel = target - geo.base[finger]
    d = np.clip(np.linalg.norm(rel), abs(LINK1 - LINK2) + 1e-6, LINK1 + LINK2 - 1e-6)
    beta = np.arccos(np.clip((d ** 2 - LINK1 ** 2 - LINK2 ** 2) / (2 * LINK1 * LINK2), -1, 1))
    a1 = np.arctan2(rel[1], rel[0]) - np.arctan2(LINK2 * np.sin(beta), LINK1 + LINK2 * np.cos(beta))
    q1 = _wrap(a1 - geo.heading[finger])
    q2 = beta - geo.bend
    return np.clip(np.array([q1, q2]), -JOINT_LIMIT, JOINT_LIMIT)


OUTER_RADIUS = 0.1     # clear of the paddles on the outside
OUTER_REACH = 1.45     # angular reach (rel. to the finger base) at that radius


@dataclass(frozen=True)
class ExpertKnobs:
    slowdown: float = 2.0
    action_noise: float = 0.05
    window: float = 1.85          # paddle angles (rel. to finger base) a finger works over, +-
    speed: float = 0.3            # pushing target speed, radians per step
    lead: float = 0.6             # most the pushing target may run ahead of its paddle (rad)
    swing_speed: float = 0.25     # angular target speed while repositioning
    tuck_radius: float = 0.03     # fingertips travel back inside the paddle circle
    backoff: float = 0.1          # angle behind the paddle a finger grips at
    anticipate: float = 0.5       # seconds of object motion allowed for when braking
    shortfall: float = 0.2        # the expert settles this far short of the goal (rad)

    def __post_init__(self):
        if self.slowdown < 1.0:
            raise ValueError("slowdown must be >= 1")
        if self.action_noise < 0:
            raise ValueError("action_noise must be >= 0")


class ScriptedExpert:
    """Finger gait for the valve and box.

    Each finger cycles push -> tuck -> swing -> grip.  A pushing finger
    drags its paddle round until the paddle leaves the finger's working
    window, then tucks inside the paddle circle (where it cannot touch
    anything), swings back to the rearmost paddle it can reach, and comes
    out to grip it.  On the valve one finger starts by swinging back so the
    strokes overlap.  Angular target speeds are divided by ``slowdown``.
    """

    def __init__(self, sim: VecEnv, knobs: ExpertKnobs):
        if sim.task is Task.DOOR:
            raise ValueError("no scripted expert for the door task")
        self.sim, self.k = sim, knobs
        self.base_ang = np.arctan2(sim.geometry.base[:, 1], sim.geometry.base[:, 0])
        tips, _, _ = sim.geometry.tips(sim.q)
        self.r = np.linalg.norm(tips[0], axis=-1)
        self.ang = np.arctan2(tips[0, :, 1], tips[0, :, 0])
        self.mode = ["swing"] * sim.F
        self.target = np.zeros(sim.F, dtype=int)      # paddle index each finger works on
        self.lost = np.zeros(sim.F, dtype=int)        # steps a pushing finger has been off its paddle
        self.waiting = np.zeros(sim.F, dtype=bool)    # sit out until a paddle comes round from behind
        for i in range(sim.F):
            rel = self._paddle_rel(i)
            j = int(np.argmin(np.abs(rel)))
            # on the valve the last finger sits out the first stroke, if the
            # paddle behind it is close enough to be worth waiting for
            behind = rel[rel < -0.3]
            self.waiting[i] = (sim.task is Task.VALVE and i == sim.F - 1 and behind.size > 0
                               and behind.max() > -knobs.window - 0.6)
            if abs(rel[j]) < 0.3 and not self.waiting[i]:
                self.mode[i], self.target[i] = "grip", j
            else:
                # fingertips start outside the paddle circle: line up out there
                self.mode[i], self.target[i] = "line_up", -1

    def _paddle_rel(self, i):
        return _wrap(self.sim.theta[0] + self.sim.paddle_offsets - self.base_ang[i])

    def _rel(self, ang, i):
        return _wrap(ang - self.base_ang[i])

    def _move(self, i, r_goal, rel_goal, speed):
        step = speed / self.k.slowdown
        self.r[i] += np.clip(r_goal - self.r[i], -0.02, 0.02)
        cur = self._rel(self.ang[i], i)
        self.ang[i] = self.base_ang[i] + cur + np.clip(rel_goal - cur, -step, step)

    def _pick(self, rel, wait: bool, reach: Optional[float] = None):
        """Rearmost paddle in reach that still leaves a useful stroke; with
        ``wait`` (or when nothing is in reach) also consider paddles that are
        still coming round from behind."""
        w = self.k.window
        ok = np.flatnonzero((rel > -(reach or w)) & (rel < w - 0.6))
        if wait or not ok.size:
            ok = np.flatnonzero((rel > -w - 1.2) & (rel < w - 0.6))
        return int(ok[np.argmin(rel[ok])]) if ok.size else int(np.argmin(rel))

    def command(self) -> np.ndarray:
        sim, k = self.sim, self.k
        err = sim.theta[0] - np.pi
        tips, _, _ = sim.geometry.tips(sim.q)
        tip_r = np.linalg.norm(tips[0], axis=-1)
        touching = sim.contacts()[0].any(axis=1)
        q_cmd = np.zeros(sim.nj)
        for i in range(sim.F):
            rel = self._paddle_rel(i)
            m = self.mode[i]
            if m == "push":
                p = rel[self.target[i]]
                self.lost[i] = 0 if touching[i] else self.lost[i] + 1
                if p > k.window or self.lost[i] > 2:
                    self.mode[i] = m = "tuck"
                else:
                    cur = self._rel(self.ang[i], i)
                    # never aim past where this paddle sits at the goal, so
                    # the grip brakes the object there
                    stop = p - err - k.shortfall - k.anticipate * sim.omega[0]
                    goal = min(cur + k.speed / k.slowdown, p + k.lead, stop)
                    self._move(i, sim.radius, goal, 10.0)
            if m == "tuck":
                self._move(i, k.tuck_radius, self._rel(self.ang[i], i), 0.0)
                if tip_r[i] < k.tuck_radius + 0.01:
                    self.mode[i], self.target[i] = "swing", -1
                    m = "swing"
            if m in ("line_up", "swing"):
                # stick with the chosen paddle while it is still worth having
                j = self.target[i]
                if j < 0 or not -k.window - 1.2 < rel[j] < k.window - 0.6:
                    reach = OUTER_REACH if m == "line_up" else None
                    self.target[i] = self._pick(rel, self.waiting[i], reach)
            tip_rel = self._rel(np.arctan2(tips[0, i, 1], tips[0, i, 0]), i)
            if m == "line_up":
                j = self.target[i]
                goal = max(rel[j] - k.backoff, -OUTER_REACH)
                self._move(i, OUTER_RADIUS, goal, k.swing_speed)
                if rel[j] - k.backoff >= -OUTER_REACH and abs(goal - tip_rel) < 0.1:
                    self.mode[i], self.waiting[i] = "grip", False
                    m = "grip"
            if m == "swing":
                j = self.target[i]
                goal = max(rel[j] - k.backoff, -k.window)
                self._move(i, k.tuck_radius, goal, k.swing_speed)
                if rel[j] - k.backoff >= -k.window and abs(goal - tip_rel) < 0.1:
                    self.mode[i], self.waiting[i] = "grip", False
                    m = "grip"
            if m == "grip":
                goal = rel[self.target[i]] - k.backoff
                self._move(i, sim.radius, goal, 2.0 * k.swing_speed)
                if touching[i] and tip_r[i] > sim.radius - 0.012:
                    self.mode[i], self.lost[i] = "push", 0
            target = self.r[i] * np.array([np.cos(self.ang[i]), np.sin(self.ang[i])])
            q_cmd[2 * i:2 * i + 2] = finger_ik(sim, i, target)
        return q_cmd / JOINT_LIMIT


def scripted_expert(config: EnvConfig, slowdown: float = 2.0, action_noise: float = 0.05,
                    rng: Optional[np.random.Generator] = None, allow_failed: bool = False,
                    knobs: Optional[ExpertKnobs] = None, max_attempts: int = 1) -> Trajectory:
    """One expert episode under position control.

    Raises ``ExpertFailure`` when the episode misses the task's success
    predicate ``max_attempts`` times in a row (unless ``allow_failed``).
    """
    if config.task is Task.DOOR:
        raise ValueError("no scripted expert for the door task")
    if config.actuation.value != "position":
        raise ValueError("the scripted expert issues position targets")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    knobs = knobs or ExpertKnobs()
    from dataclasses import replace
    knobs = replace(knobs, slowdown=slowdown, action_noise=action_noise)
    for attempt in range(1, max_attempts + 1):
        tr = _expert_episode(config, knobs, rng)
        if allow_failed or success_from_dtheta(config.task, tr.dtheta):
            return tr
    raise ExpertFailure("expert trajectory failed the success predicate", max_attempts)


def _expert_episode(config: EnvConfig, knobs: ExpertKnobs, rng: np.random.Generator) -> Trajectory:
    sim = VecEnv(config, batch=1)
    obs = sim.reset([rng])
    init = sim.get_state()[0]
    spec = sim.spec
    T = config.horizon
    O = np.zeros((T, spec.obs_dim))
    A = np.zeros((T, spec.action_dim))
    R = np.zeros(T)
    D = np.zeros(T)
    expert = ScriptedExpert(sim, knobs)
    for t in range(T):
        a = expert.command()
        if knobs.action_noise > 0:
            a = a + rng.uniform(-knobs.action_noise, knobs.action_noise, a.shape)
        a = np.clip(a, -1.0, 1.0)
        O[t], A[t] = obs[0], a
        obs, rew, info = sim.step(a[None, :])
        R[t], D[t] = rew[0], info["dtheta"][0]
    return Trajectory(obs=O, actions=A, rewards=R, log_probs=np.zeros(T), dtheta=D,
                      final_obs=obs[0].copy(), init_state=init)


def collect_demos(config: EnvConfig, n: int = DEFAULT_DEMOS, wide_init: Optional[bool] = None,
                  slowdown: float = 2.0, action_noise: float = 0.05,
                  rng: Optional[np.random.Generator] = None, seed: Optional[int] = None,
                  knobs: Optional[ExpertKnobs] = None) -> DemoSet:
    """``n`` accepted expert episodes; failed attempts are discarded, and more
    than ``10 n`` rejections raise ``ExpertFailure``."""
    from dataclasses import replace
    if n < 1:
        raise ValueError("need at least one demonstration")
    if wide_init is not None:
        config = replace(config, wide_init=wide_init)
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed) if rng is None else rng
    knobs = replace(knobs or ExpertKnobs(), slowdown=slowdown, action_noise=action_noise)
    accepted: list[Trajectory] = []
    rejected = 0
    while len(accepted) < n:
        tr = _expert_episode(config, knobs, rng)
        if success_from_dtheta(config.task, tr.dtheta):
            accepted.append(tr)
        else:
            rejected += 1
            if rejected > 10 * n:
                raise ExpertFailure("too many rejected demonstrations", rejected + len(accepted))
    return DemoSet(accepted, task=config.task.value, config_hash=config.digest(),
                   expert=f"scripted(slowdown={slowdown:g},noise={action_noise:g})",
                   seed=int(seed), wide_init=bool(config.wide_init),
                   state_dim=make_spec(config).state_dim)


# --------------------------------------------------------------------------
# persistence

MAGIC = "DEXDEMO"
VERSION = "v1"


def save_demos(demos: DemoSet, path) -> None:
    """Write ``demos`` as a DEXDEMO v1 file.

    Line 1: ``DEXDEMO v1 <task> <obs_dim> <action_dim> <count> <config-hash>``.
    Line 2: ``meta`` key=value pairs (expert label has spaces escaped).
    Then per trajectory: uint64 step count, the initial physical state, one
    record ``action | observation | reward | dtheta`` per step and the final
    observation, all little-endian float64.
    """
    head = f"{MAGIC} {VERSION} {demos.task} {demos.obs_dim} {demos.action_dim} {demos.count} {demos.config_hash}\n"
    meta = (f"meta expert={demos.expert.replace(' ', '_')} seed={demos.seed} "
            f"wide_init={int(demos.wide_init)} allow_failed={int(demos.allow_failed)} "
            f"state_dim={demos.state_dim}\n")
    chunks = [head.encode("ascii"), meta.encode("ascii")]
    for tr in demos.trajectories:
        T = len(tr)
        chunks.append(struct.pack("<Q", T))
        rec = np.hstack([tr.actions, tr.obs, tr.rewards[:, None], tr.dtheta[:, None]])
        body = np.concatenate([tr.init_state, rec.ravel(), tr.final_obs])
        chunks.append(body.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_demos(path, expect: Optional[EnvConfig] = None) -> DemoSet:
    """Read a DEXDEMO v1 file; with ``expect`` the file must match that
    environment's dimensions and configuration hash."""
    data = Path(path).read_bytes()
    try:
        nl1 = data.index(b"\n")
        nl2 = data.index(b"\n", nl1 + 1)
    except ValueError:
        raise DemoTruncatedError("missing header lines") from None
    head = data[:nl1].decode("ascii", errors="replace").split()
    if len(head) != 7 or head[0] != MAGIC:
        raise DemoFileError("not a DEXDEMO file")
    if head[1] != VERSION:
        raise DemoVersionError(f"unsupported demo format version {head[1]}")
    task, obs_dim, act_dim, count, chash = head[2], int(head[3]), int(head[4]), int(head[5]), head[6]
    meta = dict(kv.split("=", 1) for kv in data[nl1 + 1:nl2].decode("ascii").split()[1:])
    state_dim = int(meta["state_dim"])
    if expect is not None:
        spec = make_spec(expect)
        if (obs_dim, act_dim) != (spec.obs_dim, spec.action_dim) or state_dim != spec.state_dim:
            raise DemoDimensionError(
                f"file holds obs/action dims ({obs_dim}, {act_dim}), environment needs "
                f"({spec.obs_dim}, {spec.action_dim})")
        if task != expect.task.value or chash != expect.digest():
            raise DemoConfigError(f"demos recorded for {task}/{chash}, not {expect.task.value}/{expect.digest()}")
    off = nl2 + 1
    rec_w = act_dim + obs_dim + 2
    trajs = []
    for _ in range(count):
        if off + 8 > len(data):
            raise DemoTruncatedError("file ends inside a trajectory header")
        (T,) = struct.unpack_from("<Q", data, off)
        off += 8
        n = state_dim + T * rec_w + obs_dim
        if T > 10 ** 7 or off + 8 * n > len(data):
            raise DemoTruncatedError("file ends inside a trajectory block")
        body = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(float)
        off += 8 * n
        init = body[:state_dim]
        rec = body[state_dim:state_dim + T * rec_w].reshape(T, rec_w)
        trajs.append(Trajectory(obs=rec[:, act_dim:act_dim + obs_dim].copy(),
                                actions=rec[:, :act_dim].copy(), rewards=rec[:, -2].copy(),
                                log_probs=np.zeros(T), dtheta=rec[:, -1].copy(),
                                final_obs=body[-obs_dim:].copy(), init_state=init.copy()))
    if off != len(data):
        raise DemoTruncatedError("trailing bytes after the last trajectory")
    return DemoSet(trajs, task=task, config_hash=chash, expert=meta["expert"],
                   seed=int(meta["seed"]), wide_init=bool(int(meta["wide_init"])),
                   allow_failed=bool(int(meta["allow_failed"])), state_dim=state_dim)


def verify_demos(demos: DemoSet, config: EnvConfig) -> list[str]:
    """Replay every demonstration; returns a list of problems (empty if clean)."""
    from .rollout import replay
    problems = []
    for i, tr in enumerate(demos.trajectories):
        rep = replay(config, tr.init_state, tr.actions)
        if not (np.array_equal(rep.obs, tr.obs) and np.array_equal(rep.rewards, tr.rewards)
                and np.array_equal(rep.final_obs, tr.final_obs)):
            problems.append(f"demo {i}: replay diverges")
        if not demos.allow_failed and not success_from_dtheta(config.task, tr.dtheta):
            problems.append(f"demo {i}: fails the success predicate")
    return problems
