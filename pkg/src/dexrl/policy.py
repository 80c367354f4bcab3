"""Diagonal-Gaussian MLP policy, Fisher-vector products, value baseline and GAE."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .numkit import (DimensionError, MlpParams, mlp_backward, mlp_forward, mlp_from_flat,
                     mlp_init, mlp_jvp)

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianPolicy:
    mean: MlpParams
    log_std: np.ndarray

    def __post_init__(self):
        ls = np.clip(np.asarray(self.log_std, dtype=float), LOG_STD_MIN, LOG_STD_MAX)
        if ls.shape != (self.action_dim,):
            raise DimensionError(f"log_std shape {ls.shape} for action_dim {self.action_dim}")
        object.__setattr__(self, "log_std", ls)

    @property
    def obs_dim(self) -> int:
        return self.mean.sizes[0]

    @property
    def action_dim(self) -> int:
        return self.mean.sizes[-1]

    @property
    def n_params(self) -> int:
        return self.mean.n_params + self.action_dim

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mean.flat(), self.log_std])

    def with_flat(self, theta: np.ndarray) -> "GaussianPolicy":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise DimensionError(f"flat vector length {theta.shape} != {self.n_params}")
        m = self.mean.n_params
        return GaussianPolicy(mlp_from_flat(self.mean.sizes, theta[:m]), theta[m:])

    def mean_action(self, obs) -> np.ndarray:
        return mlp_forward(self.mean, obs)


def make_policy(obs_dim: int, action_dim: int, rng: np.random.Generator,
                hidden: Sequence[int] = (64, 64), init_log_std: float = -0.5,
                out_scale: float = 0.01) -> GaussianPolicy:
    """Fresh policy; the output layer starts at ``out_scale`` of the usual
    initial scale so the initial mean action is close to zero."""
    sizes = (obs_dim, *hidden, action_dim)
    return GaussianPolicy(mlp_init(sizes, rng, out_scale=out_scale),
                          np.full(action_dim, float(init_log_std)))


def log_prob(policy: GaussianPolicy, obs, actions) -> np.ndarray:
    """Exact diagonal-Gaussian log density, one value per row."""
    mu = policy.mean_action(obs)
    z = (np.asarray(actions, dtype=float) - mu) * np.exp(-policy.log_std)
    return -0.5 * np.sum(z ** 2, axis=-1) - np.sum(policy.log_std) - policy.action_dim * HALF_LOG_2PI


def sample_action(policy: GaussianPolicy, obs, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw ``a = mean(obs) + exp(log_std) * eps`` and return its log density."""
    mu = policy.mean_action(obs)
    eps = rng.standard_normal(policy.action_dim)
    a = mu + np.exp(policy.log_std) * eps
    lp = -0.5 * float(eps @ eps) - float(np.sum(policy.log_std)) - policy.action_dim * HALF_LOG_2PI
    return a, lp


def _score_parts(policy: GaussianPolicy, obs, actions):
    mu = policy.mean_action(obs)
    inv_var = np.exp(-2.0 * policy.log_std)
    diff = np.asarray(actions, dtype=float) - mu
    # d log p / d mu, and d log p / d log_std
    return diff * inv_var, diff ** 2 * inv_var - 1.0


def log_prob_grad(policy: GaussianPolicy, obs, action) -> np.ndarray:
    """Gradient of ``log pi(action | obs)`` with respect to the flat parameters."""
    dmu, dls = _score_parts(policy, np.asarray(obs, dtype=float)[None, :],
                            np.asarray(action, dtype=float)[None, :])
    gmean, _ = mlp_backward(policy.mean, np.asarray(obs, dtype=float)[None, :], dmu)
    return np.concatenate([gmean, dls[0]])


def weighted_score_sum(policy: GaussianPolicy, obs, actions, weights) -> np.ndarray:
    """``sum_i weights[i] * grad log pi(a_i | s_i)`` computed with one batched backward pass."""
    obs = np.asarray(obs, dtype=float)
    w = np.asarray(weights, dtype=float)
    dmu, dls = _score_parts(policy, obs, actions)
    gmean, _ = mlp_backward(policy.mean, obs, dmu * w[:, None])
    return np.concatenate([gmean, w @ dls])


def score_matrix(policy: GaussianPolicy, obs, actions) -> np.ndarray:
    """Per-sample score vectors stacked as rows (small problems and tests only)."""
    return np.stack([log_prob_grad(policy, o, a) for o, a in zip(obs, actions)])


def make_fvp(policy: GaussianPolicy, states, rng: np.random.Generator,
             damping: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """Empirical Fisher operator ``v -> (1/N) sum_i g_i g_i^T v + damping v``.

    One fresh action per state is drawn from the current policy; the draws are
    fixed for the lifetime of the returned operator so that repeated products
    (e.g. inside a Krylov solver) see the same matrix.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("Fisher-vector product needs a non-empty batch of states")
    if damping < 0:
        raise ValueError("damping must be non-negative")
    n = states.shape[0]
    mu = policy.mean_action(states)
    eps = rng.standard_normal(mu.shape)
    sigma = np.exp(policy.log_std)
    # score w.r.t. mean is eps / sigma, w.r.t. log_std is eps^2 - 1
    dmu = eps / sigma
    dls = eps ** 2 - 1.0
    m = policy.mean.n_params

    def fvp(v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (policy.n_params,):
            raise DimensionError(f"vector length {v.shape} != {policy.n_params}")
        _, jv = mlp_jvp(policy.mean, states, v[:m])
        c = np.sum(dmu * jv, axis=1) + dls @ v[m:]
        gmean, _ = mlp_backward(policy.mean, states, dmu * c[:, None])
        out = np.concatenate([gmean, c @ dls]) / n
        return out + damping * v

    fvp.actions = mu + sigma * eps  # type: ignore[attr-defined]
    return fvp


def fisher_vector_product(policy: GaussianPolicy, states, v, damping: float,
                          rng: np.random.Generator) -> np.ndarray:
    return make_fvp(policy, states, rng, damping)(v)


# --------------------------------------------------------------------------
# value baseline

@dataclass(frozen=True)
class ValueBaseline:
    """MLP regression of discounted return-to-go on (observation, time fraction)."""
    net: MlpParams
    horizon: int
    epochs: int = 40
    step_size: float = 1e-2
    target_scale: float = 1.0

    def features(self, obs, t) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        tf = np.asarray(t, dtype=float)[:, None] / self.horizon
        return np.concatenate([obs, tf], axis=1)

    def predict(self, obs, t) -> np.ndarray:
        return mlp_forward(self.net, self.features(obs, t))[:, 0] * self.target_scale


def make_baseline(obs_dim: int, horizon: int, rng: np.random.Generator,
                  hidden: Sequence[int] = (32, 32), epochs: int = 40,
                  step_size: float = 1e-2) -> ValueBaseline:
    net = mlp_init((obs_dim + 1, *hidden, 1), rng)
    return ValueBaseline(net=net, horizon=horizon, epochs=epochs, step_size=step_size)


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def fit_baseline(baseline: ValueBaseline, trajectories, gamma: float,
                 epochs: int | None = None, history: list | None = None) -> ValueBaseline:
    """Full-batch Adam-direction regression on returns-to-go.

    A step that raises the training MSE is rejected and the step size halved,
    so the recorded loss sequence is non-increasing.
    """
    epochs = baseline.epochs if epochs is None else epochs
    if epochs <= 0 or not trajectories:
        return baseline
    obs = np.concatenate([tr.obs for tr in trajectories])
    t = np.concatenate([np.arange(len(tr.rewards)) for tr in trajectories])
    y = np.concatenate([discounted_returns(tr.rewards, gamma) for tr in trajectories])
    # rescale the output layer so predictions are preserved under a new target scale
    scale = max(1.0, float(np.std(y)), float(np.mean(np.abs(y))))
    ratio = baseline.target_scale / scale
    net = baseline.net
    ws = list(net.weights)
    bs = list(net.biases)
    ws[-1] = ws[-1] * ratio
    bs[-1] = bs[-1] * ratio
    net = MlpParams(net.sizes, tuple(ws), tuple(bs))
    x = baseline.features(obs, t)
    yt = y / scale
    n = len(yt)

    def loss_grad(theta):
        p = net.with_flat(theta)
        err = mlp_forward(p, x)[:, 0] - yt
        g, _ = mlp_backward(p, x, (2.0 / n) * err[:, None])
        return float(np.mean(err ** 2)), g

    theta = net.flat()
    lr = baseline.step_size
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    loss, g = loss_grad(theta)
    if history is not None:
        history.append(loss)
    b1, b2 = 0.9, 0.999
    k = 0
    for _ in range(epochs):
        k += 1
        m1 = b1 * m1 + (1 - b1) * g
        m2 = b2 * m2 + (1 - b2) * g ** 2
        step = lr * (m1 / (1 - b1 ** k)) / (np.sqrt(m2 / (1 - b2 ** k)) + 1e-8)
        cand = theta - step
        closs, cg = loss_grad(cand)
        if closs <= loss:
            theta, loss, g = cand, closs, cg
        else:
            lr *= 0.5
            m1[:] = 0.0
            m2[:] = 0.0
            k = 0
        if history is not None:
            history.append(loss)
    return replace(baseline, net=net.with_flat(theta), target_scale=scale)


# --------------------------------------------------------------------------
# advantages

@dataclass
class AdvantageEstimate:
    per_trajectory: list[np.ndarray]
    estimator: str = "gae"
    lam: float = 0.97
    normalized: bool = True
    returns: list[np.ndarray] = field(default_factory=list)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.per_trajectory) if self.per_trajectory else np.zeros(0)


def gae(rewards, values, gamma: float, lam: float) -> np.ndarray:
    """GAE(lambda) with the value after the final step taken as zero."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    nxt = np.append(values[1:], 0.0)
    delta = rewards + gamma * nxt - values
    adv = np.zeros_like(delta)
    acc = 0.0
    for t in range(len(delta) - 1, -1, -1):
        acc = delta[t] + gamma * lam * acc
        adv[t] = acc
    return adv


def compute_advantages(trajectories, baseline, gamma: float, lam: float = 0.97,
                       normalize: bool = True) -> AdvantageEstimate:
    """``baseline`` is a ``ValueBaseline``, a callable ``(obs, t) -> values`` or ``None`` (V = 0)."""
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ValueError("gamma and lambda must lie in [0, 1]")
    advs, rets = [], []
    for tr in trajectories:
        tt = np.arange(len(tr.rewards))
        if baseline is None:
            v = np.zeros(len(tt))
        elif isinstance(baseline, ValueBaseline):
            v = baseline.predict(tr.obs, tt)
        else:
            v = np.asarray(baseline(tr.obs, tt), dtype=float)
        advs.append(gae(tr.rewards, v, gamma, lam))
        rets.append(discounted_returns(tr.rewards, gamma))
    if normalize and advs:
        flat = np.concatenate(advs)
        mu, sd = flat.mean(), flat.std()
        advs = [(a - mu) / (sd + 1e-8) for a in advs]
    return AdvantageEstimate(advs, "gae", lam, normalize, rets)


# --------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"DEXPOL"
CHECKPOINT_VERSION = 1


def save_policy(policy: GaussianPolicy, path) -> None:
    """Header (magic, version, obs_dim, action_dim, layer sizes) then the flat
    parameter vector as little-endian float64."""
    sizes = policy.mean.sizes
    head = CHECKPOINT_MAGIC + struct.pack("<HIII", CHECKPOINT_VERSION, policy.obs_dim,
                                          policy.action_dim, len(sizes))
    head += struct.pack(f"<{len(sizes)}I", *sizes)
    Path(path).write_bytes(head + policy.flat().astype("<f8").tobytes())


def load_policy(path) -> GaussianPolicy:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a policy checkpoint")
    off = len(CHECKPOINT_MAGIC)
    version, obs_dim, act_dim, nl = struct.unpack_from("<HIII", data, off)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off += struct.calcsize("<HIII")
    sizes = struct.unpack_from(f"<{nl}I", data, off)
    off += 4 * nl
    if sizes[0] != obs_dim or sizes[-1] != act_dim:
        raise ValueError("checkpoint header is inconsistent")
    theta = np.frombuffer(data[off:], dtype="<f8").astype(float)
    n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])) + act_dim
    if theta.shape[0] != n:
        raise ValueError(f"checkpoint holds {theta.shape[0]} values, expected {n}")
    mean = mlp_from_flat(sizes, theta[:-act_dim])
    return GaussianPolicy(mean, theta[-act_dim:])
