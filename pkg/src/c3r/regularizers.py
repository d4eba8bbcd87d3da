"""Exogeneity regularizers: prior KL, cross-group spread, per-group gradient norm.

All three operate on minibatch representations grouped by environment tag.
Each penalty has a value-only entry point and a value-and-gradient twin used
by the training loop; the gradient twins return derivatives with respect to
their immediate inputs so the caller can chain them through the encoder.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError

_LOGVAR_RANGE = (-8.0, 8.0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


@dataclass(frozen=True)
class PosteriorGaussian:
    """Per-row diagonal Gaussian over the representation."""

    mean: np.ndarray
    logvar: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.logvar.shape:
            raise DimensionError("mean and logvar must have identical shapes")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.logvar))):
            raise NumericError("posterior parameters must be finite")
        lo, hi = _LOGVAR_RANGE
        if np.any(self.logvar < lo - 1e-12) or np.any(self.logvar > hi + 1e-12):
            raise NumericError(f"logvar outside the clamp interval [{lo}, {hi}]")


def kl_term(post: PosteriorGaussian) -> float:
    """Mean over rows of KL(posterior || standard normal), in closed form."""
    value, _, _ = kl_value_grad(post.mean, post.logvar)
    return value


def kl_value_grad(mean: np.ndarray, logvar: np.ndarray
                  ) -> tuple[float, np.ndarray, np.ndarray]:
    n = mean.shape[0]
    ev = np.exp(logvar)
    value = 0.5 * float(np.sum(ev + mean * mean - 1.0 - logvar)) / n
    d_mean = mean / n
    d_logvar = 0.5 * (ev - 1.0) / n
    return value, d_mean, d_logvar


def _group_indices(env_tags: np.ndarray) -> list[np.ndarray]:
    tags = np.asarray(env_tags)
    return [np.flatnonzero(tags == t) for t in np.unique(tags)]


def indep_penalty(reprs: np.ndarray, env_tags: np.ndarray) -> float:
    """Sum over ordered tag pairs of the mean cross-group Euclidean distance."""
    value, _ = indep_value_grad(reprs, env_tags)
    return value


def indep_value_grad(reprs: np.ndarray, env_tags: np.ndarray
                     ) -> tuple[float, np.ndarray]:
    c = np.asarray(reprs, dtype=np.float64)
    if c.ndim != 2:
        raise DimensionError("representations must form a 2-D matrix")
    groups = _group_indices(env_tags)
    if len(env_tags) != c.shape[0]:
        raise DimensionError("env_tags length must match the batch size")
    if len(groups) < 2:
        warnings.warn("fewer than two environment groups; penalty is 0",
                      stacklevel=2)
        return 0.0, np.zeros_like(c)

    sizes = np.empty(c.shape[0])
    gid = np.empty(c.shape[0], dtype=int)
    for k, idx in enumerate(groups):
        sizes[idx] = idx.size
        gid[idx] = k

    sq = np.sum(c * c, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (c @ c.T)
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)

    # weight[i, j] = 1 / (n_gi * n_gj) across groups, 0 within a group
    weight = 1.0 / (sizes[:, None] * sizes[None, :])
    weight[gid[:, None] == gid[None, :]] = 0.0

    value = float(np.sum(weight * dist))
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = np.where(dist > 0.0, weight / np.where(dist > 0.0, dist, 1.0), 0.0)
    grad = 2.0 * (c * kern.sum(axis=1)[:, None] - kern @ c)
    return value, grad


def cond_indep_penalty(reprs: np.ndarray, labels: np.ndarray,
                       env_tags: np.ndarray, weight: np.ndarray,
                       bias: float) -> float:
    """Squared norm of per-group logistic-loss gradients in a unit classifier scale.

    For each group the gradient of the logistic loss with respect to a scalar
    multiplier on the classifier weights, evaluated at multiplier 1, is
    g_s = mean(z * (sigmoid(z) - y)) with z = reprs @ weight + bias; the
    penalty is the sum of g_s^2 over groups. The bias is not scaled.
    """
    z = np.asarray(reprs, dtype=np.float64) @ np.asarray(weight, dtype=np.float64)
    z = z + bias
    value, _ = cond_indep_value_grad_z(z, labels, env_tags)
    return value


def cond_indep_value_grad_z(z: np.ndarray, labels: np.ndarray,
                            env_tags: np.ndarray) -> tuple[float, np.ndarray]:
    """Penalty and its gradient with respect to the logits z."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise DimensionError("logits and labels must have matching shapes")
    p = sigmoid(z)
    r = z * (p - y)
    r_prime = (p - y) + z * p * (1.0 - p)
    value = 0.0
    grad = np.zeros_like(z)
    for idx in _group_indices(env_tags):
        g = float(np.mean(r[idx]))
        value += g * g
        grad[idx] = (2.0 * g / idx.size) * r_prime[idx]
    return value, grad
