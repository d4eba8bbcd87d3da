"""Dense numeric kernel: a small MLP encoder with hand-written backprop.

The encoder maps a feature row to the (mean, log-variance) of a diagonal
Gaussian over the learned representation. Three ELU hidden layers feed two
linear heads; the log-variance head is clamped to [-8, 8]. All parameters
live in plain float64 numpy arrays and every update is a pure function, so
identical inputs give bitwise-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Arrays = dict[str, np.ndarray]

DEFAULT_HIDDEN = (64, 32, 128)
DEFAULT_REP_DIM = 64
LOGVAR_MIN = -8.0
LOGVAR_MAX = 8.0


def elu(z: np.ndarray) -> np.ndarray:
    """ELU with unit slope: z for z > 0, exp(z) - 1 otherwise."""
    out = z.copy()
    neg = z <= 0.0
    out[neg] = np.expm1(z[neg])
    return out


def elu_grad(z: np.ndarray) -> np.ndarray:
    out = np.ones_like(z)
    neg = z <= 0.0
    out[neg] = np.exp(z[neg])
    return out


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass(frozen=True)
class EncoderParams:
    """Weights of the three-layer encoder plus its mean / log-variance heads."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w_mean: np.ndarray
    b_mean: np.ndarray
    w_logvar: np.ndarray
    b_logvar: np.ndarray

    @classmethod
    def init(cls, in_dim: int, rng: np.random.Generator,
             hidden: tuple[int, int, int] = DEFAULT_HIDDEN,
             rep_dim: int = DEFAULT_REP_DIM,
             logvar_bias: float = -5.0) -> "EncoderParams":
        """Glorot-uniform weights, zero biases except the log-variance head,
        which starts low so early sampling noise does not drown the logits."""
        h1, h2, h3 = hidden
        return cls(
            w1=glorot_uniform(rng, in_dim, h1), b1=np.zeros(h1),
            w2=glorot_uniform(rng, h1, h2), b2=np.zeros(h2),
            w3=glorot_uniform(rng, h2, h3), b3=np.zeros(h3),
            w_mean=glorot_uniform(rng, h3, rep_dim), b_mean=np.zeros(rep_dim),
            w_logvar=glorot_uniform(rng, h3, rep_dim),
            b_logvar=np.full(rep_dim, float(logvar_bias)),
        )

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def rep_dim(self) -> int:
        return self.w_mean.shape[1]

    def arrays(self) -> Arrays:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    def with_arrays(self, arrays: Arrays) -> "EncoderParams":
        return EncoderParams(**arrays)

    def validate(self) -> None:
        for name, arr in self.arrays().items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite entries in parameter '{name}'")
        if self.w2.shape[0] != self.w1.shape[1] or self.w3.shape[0] != self.w2.shape[1]:
            raise DimensionError("hidden layer widths are inconsistent")
        if self.w_mean.shape != self.w_logvar.shape:
            raise DimensionError("mean and log-variance heads disagree in shape")


@dataclass
class ActivationCache:
    """Intermediate values of one forward pass, keyed to the params that made it."""

    params: EncoderParams
    x: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    z3: np.ndarray
    h3: np.ndarray
    logvar_open: np.ndarray  # mask of head outputs inside the clamp interval


def encode_forward(params: EncoderParams, x: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, ActivationCache]:
    """Run the encoder on a batch of rows; returns (mean, logvar, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D batch, got ndim={x.ndim}")
    if x.shape[1] != params.in_dim:
        raise DimensionError(
            f"input has {x.shape[1]} columns, encoder expects {params.in_dim}")
    params.validate()

    z1 = x @ params.w1 + params.b1
    h1 = elu(z1)
    z2 = h1 @ params.w2 + params.b2
    h2 = elu(z2)
    z3 = h2 @ params.w3 + params.b3
    h3 = elu(z3)
    mean = h3 @ params.w_mean + params.b_mean
    raw = h3 @ params.w_logvar + params.b_logvar
    logvar = np.clip(raw, LOGVAR_MIN, LOGVAR_MAX)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(raw))):
        raise NumericError("encoder forward pass produced non-finite activations")
    open_mask = (raw > LOGVAR_MIN) & (raw < LOGVAR_MAX)
    cache = ActivationCache(params=params, x=x, z1=z1, h1=h1, z2=z2, h2=h2,
                            z3=z3, h3=h3, logvar_open=open_mask)
    return mean, logvar, cache


def encode_backward(params: EncoderParams, cache: ActivationCache,
                    grad_mean: np.ndarray, grad_logvar: np.ndarray) -> Arrays:
    """Gradients of a scalar loss w.r.t. every encoder parameter.

    `grad_mean` / `grad_logvar` are the loss gradients w.r.t. the head
    outputs (log-variance after clamping). The cache must come from the
    matching forward call; a cache produced under different parameters is
    rejected.
    """
    if cache.params is not params:
        raise ContractError("activation cache is stale: produced by different params")
    grad_mean = np.asarray(grad_mean, dtype=np.float64)
    grad_logvar = np.asarray(grad_logvar, dtype=np.float64)
    if grad_mean.shape != (cache.x.shape[0], params.rep_dim):
        raise DimensionError("grad_mean shape does not match the forward batch")
    if grad_logvar.shape != grad_mean.shape:
        raise DimensionError("grad_logvar shape does not match grad_mean")

    grad_raw = grad_logvar * cache.logvar_open
    g = {}
    g["w_mean"] = cache.h3.T @ grad_mean
    g["b_mean"] = grad_mean.sum(axis=0)
    g["w_logvar"] = cache.h3.T @ grad_raw
    g["b_logvar"] = grad_raw.sum(axis=0)

    dh3 = grad_mean @ params.w_mean.T + grad_raw @ params.w_logvar.T
    dz3 = dh3 * elu_grad(cache.z3)
    g["w3"] = cache.h2.T @ dz3
    g["b3"] = dz3.sum(axis=0)

    dh2 = dz3 @ params.w3.T
    dz2 = dh2 * elu_grad(cache.z2)
    g["w2"] = cache.h1.T @ dz2
    g["b2"] = dz2.sum(axis=0)

    dh1 = dz2 @ params.w2.T
    dz1 = dh1 * elu_grad(cache.z1)
    g["w1"] = cache.x.T @ dz1
    g["b1"] = dz1.sum(axis=0)
    return g


def reparameterize(mean: np.ndarray, logvar: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Differentiable draw c = mean + exp(logvar / 2) * eps."""
    return mean + np.exp(0.5 * logvar) * eps


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: Arrays
    v: Arrays
    step: int = 0

    @classmethod
    def init(cls, params: Arrays) -> "AdamState":
        return cls(m={k: np.zeros_like(a) for k, a in params.items()},
                   v={k: np.zeros_like(a) for k, a in params.items()})


def adam_step(state: AdamState, params: Arrays, grads: Arrays, lr: float,
              momentum: float = 0.8, weight_decay: float = 1e-4,
              beta2: float = 0.999, eps: float = 1e-8) -> tuple[Arrays, AdamState]:
    """One Adam update with decoupled weight decay; returns new params and state.

    `momentum` is the first-moment coefficient (beta1).
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    if set(grads) != set(params):
        raise DimensionError("grads and params disagree on parameter names")
    for name, arr in grads.items():
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite gradient for parameter '{name}'")

    t = state.step + 1
    new_params: Arrays = {}
    new_m: Arrays = {}
    new_v: Arrays = {}
    for name, p in params.items():
        gr = grads[name]
        m = momentum * state.m[name] + (1.0 - momentum) * gr
        v = beta2 * state.v[name] + (1.0 - beta2) * gr * gr
        m_hat = m / (1.0 - momentum ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_params[name] = p - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, step=t)


def finite_difference(fn: Callable[[Arrays], float], params: Arrays,
                      h: float = 1e-5) -> Arrays:
    """Central finite-difference gradient of a scalar function of the params."""
    grads: Arrays = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = fn(params)
            flat[i] = orig - h
            lo = fn(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads[name] = g
    return grads


def max_relative_error(analytic: Arrays, numeric: Arrays, floor: float = 1e-6) -> float:
    """Worst per-entry relative error between two gradient pytrees."""
    worst = 0.0
    for name in analytic:
        a = analytic[name]
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
