"""Desk-scale simulations of the valve, box and door tasks.

All three tasks share one hand model: ``F`` planar two-link fingers whose
joints are damped double integrators (``q'' = tau - c q'``, unit mass)
advanced by semi-implicit Euler.  The object is driven through a friction
coupling whenever a fingertip is close to one of its paddles (valve, box) or,
for the door, through a latch that engages when two fingertips close on the
handle.

The simulator is batched: ``VecEnv`` steps ``B`` independent lanes at once
and every operation is elementwise per lane, so a lane's trajectory does not
depend on how many lanes run next to it.  ``EnvModel`` is the single-lane
interface.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np


class ConfigError(ValueError):
    """Invalid environment or experiment configuration."""


class ActionError(ValueError):
    """Action has the wrong length or non-finite entries."""


class Task(str, enum.Enum):
    VALVE = "valve"
    BOX = "box"
    DOOR = "door"


class Actuation(str, enum.Enum):
    POSITION = "position"
    POSITION_DELTA = "position_delta"
    TORQUE = "torque"
    TORQUE_DELTA = "torque_delta"


# Physical constants of the simulated hand and objects.
JOINT_LIMIT = np.pi / 2
LINK1, LINK2 = 0.15, 0.10
MASS, JOINT_DAMPING = 1.0, 2.0
KP, KD = 10.0, 1.0
TORQUE_LIMIT = KP * JOINT_LIMIT   # same peak authority as the PD loop
DELTA_RATE = 2.0            # delta schemes sweep the full [-1, 1] command range per second
VALVE_RADIUS = 0.06
BOX_RADIUS = 0.06
CONTACT_RADIUS = 0.025
FRICTION = 8.0
OBJECT_DAMPING = 1.5
BOX_STOPS = (-np.pi / 4, 5 * np.pi / 4)
GOAL_ANGLE = np.pi
SUCCESS_ANGLE = np.pi / 9    # 20 degrees
SUCCESS_FRACTION = 0.2
DOOR_SUCCESS_ANGLE = np.pi / 6  # 30 degrees
ARM_RANGE = (0.0, 0.4)
DOOR_HANDLE_X = 0.3
DOOR_LATCH_RADIUS = 0.03
DOOR_GAIN = 4.0
DOOR_MAX = np.pi / 2
WIDE_INIT = np.pi / 4

# Finger mounting: bases sit on a circle around the object, the neutral pose
# (q = 0) parks each fingertip just outside the contact zone of its paddle.
BASE_RADIUS = 0.20
NEUTRAL_TIP_RADIUS = 0.095


@dataclass(frozen=True)
class RandomizationConfig:
    """Variant A: nominal dynamics.  B: per-episode PD gain and friction
    scaling.  C: same as B (the last action is always observed)."""
    variant: str = "A"
    gain_range: tuple[float, float] = (0.7, 1.3)
    friction_range: tuple[float, float] = (0.7, 1.3)

    def __post_init__(self):
        if self.variant not in ("A", "B", "C"):
            raise ConfigError(f"unknown randomization variant {self.variant!r}")
        for lo, hi in (self.gain_range, self.friction_range):
            if not 0 < lo <= hi:
                raise ConfigError(f"bad multiplicative range ({lo}, {hi})")

    @property
    def randomized(self) -> bool:
        return self.variant in ("B", "C")


@dataclass(frozen=True)
class EnvConfig:
    task: Task = Task.VALVE
    fingers: int = 3
    actuation: Actuation = Actuation.POSITION
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    wide_init: bool = False
    horizon: int = 100
    dt: float = 0.05
    reward_variant: str = "r2"
    abs_door_term: bool = False
    gamma: float = 0.995
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "task", Task(self.task))
            object.__setattr__(self, "actuation", Actuation(self.actuation))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.fingers not in (3, 4):
            raise ConfigError(f"fingers must be 3 or 4, got {self.fingers}")
        if self.horizon < 1 or self.dt <= 0:
            raise ConfigError("horizon must be >= 1 and dt > 0")
        if self.reward_variant not in ("r1", "r2", "r3"):
            raise ConfigError(f"unknown reward variant {self.reward_variant!r}")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")

    def digest(self) -> str:
        """Short stable hash of everything that shapes the dynamics and data."""
        d = asdict(self)
        d.pop("seed")
        text = repr(sorted((k, str(v)) for k, v in d.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MdpSpec:
    task: Task
    n_joints: int
    state_dim: int
    obs_dim: int
    action_dim: int
    object_obs: int
    horizon: int
    gamma: float
    init_sampler: str
    init_range: tuple[float, float]


def make_spec(cfg: EnvConfig) -> MdpSpec:
    nj = 2 * cfg.fingers
    adim = nj + 1 if cfg.task is Task.DOOR else nj
    if cfg.task is Task.DOOR:
        init, rng_ = "arm_at_rest", (0.0, 0.0)
    elif cfg.wide_init and cfg.task is Task.VALVE:
        init, rng_ = "uniform_object_angle", (-WIDE_INIT, WIDE_INIT)
    else:
        init, rng_ = "fixed_object_angle", (0.0, 0.0)
    return MdpSpec(task=cfg.task, n_joints=nj, state_dim=len(_state_fields(cfg)) + adim,
                   obs_dim=nj + 2 + adim, action_dim=adim, object_obs=2,
                   horizon=cfg.horizon, gamma=cfg.gamma, init_sampler=init, init_range=rng_)


def _state_fields(cfg: EnvConfig) -> list[str]:
    nj = 2 * cfg.fingers
    names = [f"q{i}" for i in range(nj)] + [f"qd{i}" for i in range(nj)]
    names += [f"cmd{i}" for i in range(nj + (cfg.task is Task.DOOR))]
    if cfg.task is Task.DOOR:
        names += ["x_arm", "xd_arm", "theta_door", "latched", "x_latch"]
    else:
        names += ["theta", "omega"]
    names += ["gain_scale", "friction_scale", "step"]
    return names


# --------------------------------------------------------------------------
# state containers (single lane views, used by reward_fn and replay)

@dataclass
class ClawValveState:
    q: np.ndarray
    qd: np.ndarray
    theta_valve: float
    omega: float
    theta_goal: float
    last_action: np.ndarray
    step: int

    @property
    def dtheta(self) -> float:
        return self.theta_valve - self.theta_goal


@dataclass
class BoxFlipState:
    q: np.ndarray
    qd: np.ndarray
    theta_box: float
    omega: float
    theta_goal: float
    last_action: np.ndarray
    step: int

    @property
    def dtheta(self) -> float:
        return self.theta_box - self.theta_goal


@dataclass
class DoorState:
    q: np.ndarray
    qd: np.ndarray
    x_arm: float
    xd_arm: float
    theta_door: float
    latched: bool
    last_action: np.ndarray
    step: int
    theta_closed: float = 0.0
    x_door: float = DOOR_HANDLE_X

    @property
    def dtheta(self) -> float:
        return self.theta_door - self.theta_closed


# --------------------------------------------------------------------------
# rewards and success

def _reward_core(task: Task, variant: str, dtheta, qd=None, x_arm=None,
                 abs_door_term: bool = False):
    if task is Task.DOOR:
        term = np.abs(x_arm - DOOR_HANDLE_X) if abs_door_term else (x_arm - DOOR_HANDLE_X)
        return -(dtheta ** 2) - term
    err = np.abs(dtheta)
    r = -err
    if variant in ("r2", "r3"):
        r = r + 10.0 * (err < 0.1) + 50.0 * (err < 0.05)
    if variant == "r3":
        if qd is None:
            raise ValueError("reward variant r3 needs joint velocities")
        r = r - np.sqrt(np.sum(np.asarray(qd) ** 2, axis=-1))
    return r


def reward_fn(task, variant: str, state, abs_door_term: bool = False) -> float:
    """Reward of a single task state (``ClawValveState``/``BoxFlipState``/``DoorState``)."""
    task = Task(task)
    if variant not in ("r1", "r2", "r3"):
        raise ConfigError(f"unknown reward variant {variant!r}")
    qd = getattr(state, "qd", None)
    if task is Task.DOOR:
        return float(_reward_core(task, variant, state.dtheta, x_arm=state.x_arm,
                                  abs_door_term=abs_door_term))
    return float(_reward_core(task, variant, state.dtheta, qd=qd))


def success_from_dtheta(task, dtheta) -> bool:
    task = Task(task)
    d = np.asarray(dtheta, dtype=float)
    if d.size == 0:
        raise ValueError("empty trajectory")
    if task is Task.DOOR:
        return bool(np.any(d > DOOR_SUCCESS_ANGLE))
    return bool(np.count_nonzero(np.abs(d) < SUCCESS_ANGLE) >= SUCCESS_FRACTION * d.size)


def success(task, trajectory) -> bool:
    """Task success predicate over the post-step angle errors of a trajectory."""
    return success_from_dtheta(task, trajectory.dtheta)


# --------------------------------------------------------------------------
# kinematics

def _unit(a):
    return np.stack([np.cos(a), np.sin(a)], axis=-1)


def _perp(a):
    return np.stack([-np.sin(a), np.cos(a)], axis=-1)


@dataclass(frozen=True)
class HandGeometry:
    base: np.ndarray         # (F, 2)
    heading: np.ndarray      # (F,) link-1 angle at q1 = 0
    bend: float              # link-2 angle relative to link 1 at q2 = 0

    def tips(self, q):
        """Fingertip positions and Jacobian pieces for joint angles ``q`` of shape (B, 2F)."""
        q1, q2 = q[..., 0::2], q[..., 1::2]
        a1 = self.heading + q1
        a2 = a1 + self.bend + q2
        tip = self.base + LINK1 * _unit(a1) + LINK2 * _unit(a2)
        return tip, a1, a2

    def tip_velocity(self, q, qd):
        _, a1, a2 = self.tips(q)
        qd1, qd2 = qd[..., 0::2], qd[..., 1::2]
        return (LINK1 * _perp(a1) * qd1[..., None]
                + LINK2 * _perp(a2) * (qd1 + qd2)[..., None])


def _ring_geometry(fingers: int) -> HandGeometry:
    # Fingers on a ring around the object; neutral tip on the radial line of
    # its base at NEUTRAL_TIP_RADIUS from the object centre.
    phi = 2 * np.pi * np.arange(fingers) / fingers
    base = BASE_RADIUS * _unit(phi)
    d = BASE_RADIUS - NEUTRAL_TIP_RADIUS
    cos_b = (d ** 2 - LINK1 ** 2 - LINK2 ** 2) / (2 * LINK1 * LINK2)
    bend = float(np.arccos(np.clip(cos_b, -1, 1)))
    # angle between link 1 and the base->tip line
    off = np.arctan2(LINK2 * np.sin(bend), LINK1 + LINK2 * np.cos(bend))
    heading = phi + np.pi - off
    return HandGeometry(base=base, heading=heading, bend=bend)


def _door_geometry(fingers: int) -> HandGeometry:
    # Hand frame: wrist at the origin, fingers point along +x toward the door,
    # spread laterally; positions are offset by x_arm at run time.
    ys = np.linspace(-0.04, 0.04, fingers)
    base = np.stack([np.zeros(fingers), ys], axis=-1)
    return HandGeometry(base=base, heading=np.zeros(fingers), bend=0.0)


DOOR_HANDLE_POINT = np.array([DOOR_HANDLE_X + 0.20, 0.0])


# --------------------------------------------------------------------------
# the batched simulator

class VecEnv:
    """``B`` independent lanes of one task configuration."""

    def __init__(self, config: EnvConfig, batch: int = 1):
        self.config = config
        self.spec = make_spec(config)
        self.batch = int(batch)
        self.task = config.task
        self.F = config.fingers
        self.nj = 2 * self.F
        self.adim = self.spec.action_dim
        self.geometry = (_door_geometry(self.F) if self.task is Task.DOOR
                         else _ring_geometry(self.F))
        if self.task is Task.VALVE:
            self.paddle_offsets = 2 * np.pi * np.arange(self.F) / self.F
            self.radius = VALVE_RADIUS
        elif self.task is Task.BOX:
            self.paddle_offsets = np.array([0.0, np.pi])
            self.radius = BOX_RADIUS
        # per-dof ranges for position targets; torque limits
        lo = np.full(self.adim, -JOINT_LIMIT)
        hi = np.full(self.adim, JOINT_LIMIT)
        if self.task is Task.DOOR:
            lo[-1], hi[-1] = ARM_RANGE
        self.dof_lo, self.dof_hi = lo, hi
        self._alloc()

    # ------------------------------------------------------------------ state
    def _alloc(self):
        B = self.batch
        self.q = np.zeros((B, self.nj))
        self.qd = np.zeros((B, self.nj))
        self.cmd = np.zeros((B, self.adim))
        self.last_action = np.zeros((B, self.adim))
        self.theta = np.zeros(B)
        self.omega = np.zeros(B)
        self.x_arm = np.zeros(B)
        self.xd_arm = np.zeros(B)
        self.latched = np.zeros(B, dtype=bool)
        self.x_latch = np.zeros(B)
        self.gain_scale = np.ones(B)
        self.friction_scale = np.ones(B)
        self.t = 0

    @property
    def theta_goal(self) -> float:
        return 0.0 if self.task is Task.DOOR else GOAL_ANGLE

    def dtheta(self) -> np.ndarray:
        if self.task is Task.DOOR:
            return self.theta.copy()
        return self.theta - GOAL_ANGLE

    def neutral_command(self) -> np.ndarray:
        """Command value whose position target equals the neutral pose."""
        c = np.zeros(self.adim)
        torque_like = self.config.actuation in (Actuation.TORQUE, Actuation.TORQUE_DELTA)
        if self.task is Task.DOOR and not torque_like:
            c[-1] = -1.0
        return c

    def reset(self, rngs) -> np.ndarray:
        """Sample every lane from the initial-state distribution.

        ``rngs`` is a list of ``numpy.random.Generator``, one per lane.
        """
        if len(rngs) != self.batch:
            raise ValueError(f"need {self.batch} generators, got {len(rngs)}")
        self._alloc()
        cfg = self.config
        for i, g in enumerate(rngs):
            # fixed draw order keeps lanes reproducible across configurations
            init_u = g.uniform(-1.0, 1.0)
            gain_u = g.uniform(*cfg.randomization.gain_range)
            fric_u = g.uniform(*cfg.randomization.friction_range)
            if self.spec.init_sampler == "uniform_object_angle":
                self.theta[i] = WIDE_INIT * init_u
            if cfg.randomization.randomized:
                self.gain_scale[i] = gain_u
                self.friction_scale[i] = fric_u
        self.cmd[:] = self.neutral_command()
        if self.task is Task.DOOR:
            self.x_arm[:] = ARM_RANGE[0]
        return self.observe()

    def set_object_angle(self, theta) -> np.ndarray:
        """Override the object angle of every lane (robustness sweeps)."""
        self.theta[:] = theta
        return self.observe()

    def observe(self) -> np.ndarray:
        if self.task is Task.DOOR:
            obj = np.stack([self.theta, self.x_arm - DOOR_HANDLE_X], axis=-1)
        else:
            obj = np.stack([self.theta, self.theta - GOAL_ANGLE], axis=-1)
        return np.concatenate([self.q, obj, self.last_action], axis=-1)

    # -------------------------------------------------------------- snapshot
    def get_state(self) -> np.ndarray:
        """Flat physical state per lane, layout given by ``state_fields``."""
        cols = [self.q, self.qd, self.cmd]
        if self.task is Task.DOOR:
            cols += [self.x_arm[:, None], self.xd_arm[:, None], self.theta[:, None],
                     self.latched[:, None].astype(float), self.x_latch[:, None]]
        else:
            cols += [self.theta[:, None], self.omega[:, None]]
        cols += [self.gain_scale[:, None], self.friction_scale[:, None],
                 np.full((self.batch, 1), float(self.t))]
        return np.concatenate(cols + [self.last_action], axis=-1)

    def set_state(self, state: np.ndarray) -> np.ndarray:
        state = np.asarray(state, dtype=float).reshape(self.batch, -1)
        if state.shape[1] != self.spec.state_dim:
            raise ValueError(f"state length {state.shape[1]} != {self.spec.state_dim}")
        nj, ad = self.nj, self.adim
        i = 0
        self.q = state[:, i:i + nj].copy(); i += nj
        self.qd = state[:, i:i + nj].copy(); i += nj
        self.cmd = state[:, i:i + ad].copy(); i += ad
        if self.task is Task.DOOR:
            self.x_arm = state[:, i].copy()
            self.xd_arm = state[:, i + 1].copy()
            self.theta = state[:, i + 2].copy()
            self.latched = state[:, i + 3] > 0.5
            self.x_latch = state[:, i + 4].copy()
            i += 5
        else:
            self.theta = state[:, i].copy()
            self.omega = state[:, i + 1].copy()
            i += 2
        self.gain_scale = state[:, i].copy()
        self.friction_scale = state[:, i + 1].copy()
        self.t = int(state[0, i + 2])
        i += 3
        self.last_action = state[:, i:i + ad].copy()
        return self.observe()

    # ------------------------------------------------------------------ step
    def _command(self, a: np.ndarray):
        dt = self.config.dt
        act = self.config.actuation
        if act in (Actuation.POSITION, Actuation.TORQUE):
            self.cmd = a.copy()
        else:
            self.cmd = np.clip(self.cmd + DELTA_RATE * dt * a, -1.0, 1.0)

    def _torques(self, pos, vel):
        act = self.config.actuation
        if act in (Actuation.POSITION, Actuation.POSITION_DELTA):
            target = self.dof_lo + 0.5 * (self.cmd + 1.0) * (self.dof_hi - self.dof_lo)
            g = self.gain_scale[:, None]
            return g * KP * (target - pos) - g * KD * vel
        return TORQUE_LIMIT * self.cmd

    def _integrate(self, pos, vel, tau, lo, hi):
        dt = self.config.dt
        acc = (tau - JOINT_DAMPING * vel) / MASS
        vel = vel + dt * acc
        pos = pos + dt * vel
        hit_lo, hit_hi = pos < lo, pos > hi
        pos = np.clip(pos, lo, hi)
        vel = np.where((hit_lo & (vel < 0)) | (hit_hi & (vel > 0)), 0.0, vel)
        return pos, vel

    def step(self, action) -> tuple[np.ndarray, np.ndarray, dict]:
        a = np.asarray(action, dtype=float).reshape(self.batch, -1)
        if a.shape[1] != self.adim:
            raise ActionError(f"action length {a.shape[1]} != action_dim {self.adim}")
        if not np.all(np.isfinite(a)):
            raise ActionError("non-finite action")
        a = np.clip(a, -1.0, 1.0)
        self._command(a)
        nj = self.nj
        if self.task is Task.DOOR:
            pos = np.concatenate([self.q, self.x_arm[:, None]], axis=-1)
            vel = np.concatenate([self.qd, self.xd_arm[:, None]], axis=-1)
        else:
            pos, vel = self.q, self.qd
        tau = self._torques(pos, vel)
        pos, vel = self._integrate(pos, vel, tau, self.dof_lo, self.dof_hi)
        self.q, self.qd = pos[:, :nj], vel[:, :nj]
        if self.task is Task.DOOR:
            self.x_arm, self.xd_arm = pos[:, nj], vel[:, nj]
            self._door_update()
        else:
            self._object_update()
        self.last_action = a
        self.t += 1
        dth = self.dtheta()
        rew = _reward_core(self.task, self.config.reward_variant, dth, qd=self.qd,
                           x_arm=self.x_arm, abs_door_term=self.config.abs_door_term)
        info = {"dtheta": dth, "step": self.t}
        return self.observe(), rew, info

    def contacts(self) -> np.ndarray:
        """Boolean (B, F, P) fingertip/paddle engagement matrix."""
        tip, _, _ = self.geometry.tips(self.q)
        ang = self.theta[:, None] + self.paddle_offsets[None, :]
        paddle = self.radius * _unit(ang)                       # (B, P, 2)
        diff = tip[:, :, None, :] - paddle[:, None, :, :]
        return np.sum(diff ** 2, axis=-1) < CONTACT_RADIUS ** 2

    def _object_update(self):
        dt = self.config.dt
        tipv = self.geometry.tip_velocity(self.q, self.qd)         # (B, F, 2)
        ang = self.theta[:, None] + self.paddle_offsets[None, :]
        tangent = _perp(ang)                                        # (B, P, 2)
        vt = np.einsum("bfk,bpk->bfp", tipv, tangent)
        eng = self.contacts()
        mu = FRICTION * self.friction_scale
        n_eng = eng.sum(axis=(1, 2))
        drive = np.sum(np.where(eng, vt, 0.0), axis=(1, 2)) / self.radius
        # friction pulls the rim toward the fingertip speed; both the coupling
        # and the object damping are treated implicitly for stability
        omega = (self.omega + dt * mu * drive) / (1.0 + dt * (mu * n_eng + OBJECT_DAMPING))
        theta = self.theta + dt * omega
        if self.task is Task.BOX:
            lo, hi = BOX_STOPS
            stop = ((theta <= lo) & (omega < 0)) | ((theta >= hi) & (omega > 0))
            theta = np.clip(theta, lo, hi)
            omega = np.where(stop, 0.0, omega)
        self.theta, self.omega = theta, omega

    def door_tips(self) -> np.ndarray:
        tip, _, _ = self.geometry.tips(self.q)
        return tip + np.stack([self.x_arm, np.zeros(self.batch)], axis=-1)[:, None, :]

    def _door_update(self):
        d2 = np.sum((self.door_tips() - DOOR_HANDLE_POINT) ** 2, axis=-1)
        close = np.count_nonzero(d2 < DOOR_LATCH_RADIUS ** 2, axis=1) >= 2
        newly = close & ~self.latched
        self.x_latch = np.where(newly, self.x_arm, self.x_latch)
        self.latched = self.latched | close
        pulled = np.clip(DOOR_GAIN * (self.x_latch - self.x_arm), 0.0, DOOR_MAX)
        self.theta = np.where(self.latched, np.maximum(self.theta, pulled), self.theta)

    # --------------------------------------------------------------- helpers
    def lane_state(self, i: int = 0):
        """Typed snapshot of lane ``i``."""
        if self.task is Task.DOOR:
            return DoorState(q=self.q[i].copy(), qd=self.qd[i].copy(), x_arm=float(self.x_arm[i]),
                             xd_arm=float(self.xd_arm[i]), theta_door=float(self.theta[i]),
                             latched=bool(self.latched[i]), last_action=self.last_action[i].copy(),
                             step=self.t)
        cls = ClawValveState if self.task is Task.VALVE else BoxFlipState
        kw = dict(q=self.q[i].copy(), qd=self.qd[i].copy(), omega=float(self.omega[i]),
                  theta_goal=GOAL_ANGLE, last_action=self.last_action[i].copy(), step=self.t)
        if self.task is Task.VALVE:
            return cls(theta_valve=float(self.theta[i]), **kw)
        return cls(theta_box=float(self.theta[i]), **kw)


class EnvModel:
    """One environment instance with its own seeded generator."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.sim = VecEnv(config, batch=1)
        self.spec = self.sim.spec
        self.rng = np.random.default_rng(config.seed)

    @property
    def state(self):
        return self.sim.lane_state(0)

    def reset(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return self.sim.reset([rng if rng is not None else self.rng])[0]

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        obs, rew, info = self.sim.step(np.asarray(action, dtype=float)[None, :])
        done = self.sim.t >= self.config.horizon
        return obs[0], float(rew[0]), done, {"dtheta": float(info["dtheta"][0]), "step": info["step"]}

    def observation(self, state=None) -> np.ndarray:
        if state is None:
            return self.sim.observe()[0]
        return observation(self.config, state)

    def get_state(self) -> np.ndarray:
        return self.sim.get_state()[0]

    def set_state(self, flat) -> np.ndarray:
        return self.sim.set_state(np.asarray(flat)[None, :])[0]


def env_create(task="valve", fingers: int = 3, actuation="position",
               randomization: RandomizationConfig | str = "A", seed: int = 0,
               **kwargs) -> EnvModel:
    if isinstance(randomization, str):
        randomization = RandomizationConfig(variant=randomization)
    cfg = EnvConfig(task=task, fingers=fingers, actuation=actuation,
                    randomization=randomization, seed=seed, **kwargs)
    return EnvModel(cfg)


def observation(config: EnvConfig, state) -> np.ndarray:
    """Observation vector of a typed state: joints | object terms | last action."""
    if isinstance(state, DoorState):
        obj = [state.theta_door, state.x_arm - state.x_door]
    else:
        ang = state.theta_valve if isinstance(state, ClawValveState) else state.theta_box
        obj = [ang, ang - state.theta_goal]
    return np.concatenate([state.q, obj, state.last_action])


def with_overrides(config: EnvConfig, **kw) -> EnvConfig:
    return replace(config, **kw)
