"""Small numerical core: a tanh MLP with hand-written derivatives, a Krylov
solver for the natural-gradient system, and a spectral vibration score.

Parameters of an MLP are always exposed as one flat vector laid out layer by
layer, weights (row-major, shape ``(n_in, n_out)``) before biases.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes do not chain."""


class NumericalError(ArithmeticError):
    """Raised when a solver produces a non-finite intermediate."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class MlpParams:
    sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.sizes) < 2 or any(int(n) <= 0 for n in self.sizes):
            raise DimensionError(f"bad layer sizes {self.sizes}")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("need one weight/bias pair per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise DimensionError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} do not match sizes {self.sizes}")

    @property
    def n_params(self) -> int:
        return param_count(self.sizes)

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_flat(self, theta: np.ndarray) -> "MlpParams":
        return mlp_from_flat(self.sizes, theta)


def param_count(sizes: Sequence[int]) -> int:
    return int(sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])))


def mlp_from_flat(sizes: Sequence[int], theta: np.ndarray) -> MlpParams:
    sizes = tuple(int(s) for s in sizes)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (param_count(sizes),):
        raise DimensionError(f"flat vector of length {theta.shape} for {param_count(sizes)} params")
    ws, bs, i = [], [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        ws.append(theta[i:i + a * b].reshape(a, b).copy())
        i += a * b
        bs.append(theta[i:i + b].copy())
        i += b
    return MlpParams(sizes, tuple(ws), tuple(bs))


def mlp_init(sizes: Sequence[int], rng: np.random.Generator, out_scale: float = 1.0) -> MlpParams:
    """Xavier-uniform weights, zero biases; last layer scaled by ``out_scale``."""
    sizes = tuple(int(s) for s in sizes)
    ws, bs = [], []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = np.sqrt(6.0 / (a + b))
        w = rng.uniform(-lim, lim, size=(a, b))
        if i == len(sizes) - 2:
            w = w * out_scale
        ws.append(w)
        bs.append(np.zeros(b))
    return MlpParams(sizes, tuple(ws), tuple(bs))


def _as_batch(params: MlpParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != params.sizes[0]:
        raise DimensionError(f"input shape {x.shape} does not match first layer size {params.sizes[0]}")
    return xb, single


def _forward_trace(params: MlpParams, xb: np.ndarray) -> list[np.ndarray]:
    # activations[i] is the input to layer i; the last entry is the network output
    acts = [xb]
    h = xb
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        h = z if i == n - 1 else np.tanh(z)
        acts.append(h)
    return acts


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of row vectors."""
    xb, single = _as_batch(params, x)
    out = _forward_trace(params, xb)[-1]
    return out[0] if single else out


def mlp_backward(params: MlpParams, x, output_grad) -> tuple[np.ndarray, np.ndarray]:
    """Vector-Jacobian product.

    Returns the flat parameter gradient (summed over the batch when ``x`` is a
    batch) and the gradient with respect to the input, shaped like ``x``.
    """
    xb, single = _as_batch(params, x)
    gb = np.asarray(output_grad, dtype=float)
    gb = gb[None, :] if gb.ndim == 1 else gb
    if gb.shape != (xb.shape[0], params.sizes[-1]):
        raise DimensionError(f"output_grad shape {np.shape(output_grad)} does not match output")
    acts = _forward_trace(params, xb)
    n = len(params.weights)
    grads: list[np.ndarray] = [None] * (2 * n)  # type: ignore[list-item]
    delta = gb
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            delta = delta * (1.0 - acts[i + 1] ** 2)
        grads[2 * i] = (acts[i].T @ delta).ravel()
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
    input_grad = delta[0] if single else delta
    return np.concatenate(grads), input_grad


def mlp_jvp(params: MlpParams, x, tangent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward-mode product of the parameter Jacobian with a flat tangent.

    Returns ``(output, d_output)`` for every row of ``x``.
    """
    xb, single = _as_batch(params, x)
    dparams = params.with_flat(tangent)
    h, dh = xb, np.zeros_like(xb)
    n = len(params.weights)
    for i in range(n):
        w, b = params.weights[i], params.biases[i]
        z = h @ w + b
        dz = dh @ w + h @ dparams.weights[i] + dparams.biases[i]
        if i == n - 1:
            h, dh = z, dz
        else:
            h = np.tanh(z)
            dh = (1.0 - h ** 2) * dz
    return (h[0], dh[0]) if single else (h, dh)


def conjugate_gradient(apply_A: Callable[[np.ndarray], np.ndarray], b, max_iters: int = 10,
                       residual_tol: float = 1e-10, history: list | None = None) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive-definite ``A`` given only products.

    Uses the conjugate-residual recurrence, which spans the same Krylov spaces
    as classic CG but minimises ``||b - A x||`` over them, so the residual norm
    never increases.  Stops when ``||A x - b|| <= residual_tol * ||b||`` or
    after ``max_iters`` iterations.  Residual norms are appended to ``history``
    when given (entry 0 is ``||b||``).
    """
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise NumericalError("non-finite right-hand side", 0)
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if history is not None:
        history.append(bnorm)
    if bnorm == 0.0:
        return x
    r = b.copy()
    Ar = apply_A(r)
    p, Ap = r.copy(), Ar.copy()
    rAr = r @ Ar
    for it in range(1, max_iters + 1):
        ApAp = Ap @ Ap
        if not np.isfinite(ApAp) or not np.isfinite(rAr):
            raise NumericalError("non-finite curvature", it)
        if ApAp == 0.0:
            break
        alpha = rAr / ApAp
        x = x + alpha * p
        r = r - alpha * Ap
        rnorm = np.linalg.norm(r)
        if not np.isfinite(rnorm) or not np.all(np.isfinite(x)):
            raise NumericalError("non-finite iterate", it)
        if history is not None:
            history.append(rnorm)
        if rnorm <= residual_tol * bnorm or it == max_iters:
            break
        Ar = apply_A(r)
        rAr_new = r @ Ar
        beta = rAr_new / rAr
        rAr = rAr_new
        p = r + beta * p
        Ap = Ar + beta * Ap
    return x


def dft_magnitudes(signal) -> np.ndarray:
    """One-sided DFT magnitudes, bins ``0 .. N//2``, by direct summation."""
    x = np.asarray(signal, dtype=float)
    n = x.shape[0]
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    ang = 2.0 * np.pi * k * t / n
    re = np.cos(ang) @ x
    im = -np.sin(ang) @ x
    return np.hypot(re, im)


def vibration_metric(signal, k: int = 5) -> float:
    """Sum of the ``k`` largest non-DC DFT magnitudes of one joint trace."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise DimensionError("vibration_metric takes a single joint trace")
    if k < 1 or x.shape[0] < 2 * k + 1:
        raise ValueError(f"signal of length {x.shape[0]} too short for k={k} (need {2 * k + 1})")
    mags = dft_magnitudes(x)[1:]
    return float(np.sort(mags)[::-1][:k].sum())
