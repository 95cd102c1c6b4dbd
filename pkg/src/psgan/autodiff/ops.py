"""Activations, losses, dropout and reduction statistics."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from psgan.errors import DegeneratePatch, ShapeError
from psgan.autodiff.tensor import (
    Tensor,
    as_tensor,
    mean,
    mul,
    record,
    sqrt,
    square,
    sub,
    sum_,
)

EPS = 1e-5


def relu(x: Tensor) -> Tensor:
    xd = x.data
    pos = xd > 0
    return record("relu", np.where(pos, xd, 0).astype(xd.dtype), (x,), lambda g: (g * pos,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    xd = x.data
    scale = np.where(xd > 0, 1.0, slope).astype(xd.dtype)
    return record("leaky_relu", xd * scale, (x,), lambda g: (g * scale,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return record("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return record("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error."""
    target = as_tensor(target, like=pred)
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray(np.abs(diff).sum() / n, dtype=diff.dtype)

    def grad_fn(g):
        s = np.sign(diff) * (g / n)
        return s, -s

    return record("l1_loss", out, (pred, target), grad_fn)


def bce_with_logits(logits: Tensor, target) -> Tensor:
    """Mean binary cross-entropy on raw logits.

    ``target`` may be a scalar label broadcast over ``logits``.
    """
    z = logits.data
    y = np.broadcast_to(np.asarray(target.data if isinstance(target, Tensor) else target,
                                   dtype=z.dtype), z.shape)
    n = z.size
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = np.asarray(per.sum() / n, dtype=z.dtype)
    return record("bce_with_logits", out, (logits,),
                  lambda g: ((_sigmoid(z) - y) * (g / n),))


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator = None) -> Tensor:
    """Inverted dropout. Identity outside training mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return record("dropout", x.data * keep, (x,), lambda g: (g * keep,))


class NormStats(NamedTuple):
    """Per-channel mean and epsilon-stabilised standard deviation."""

    mu: Tensor
    sigma: Tensor


def moments(x: Tensor, axes, eps: float = EPS) -> NormStats:
    """Mean and sqrt(population variance + eps) over ``axes`` (kept as size-1 dims)."""
    axes = tuple(a % x.ndim for a in ((axes,) if isinstance(axes, int) else axes))
    if any(x.shape[a] == 0 for a in axes):
        raise ShapeError(f"moments: reduction over zero elements (shape {x.shape})")
    mu = mean(x, axes, keepdims=True)
    var = mean(square(sub(x, mu)), axes, keepdims=True)
    return NormStats(mu, sqrt(var + eps))


def _mask_array(mask, x: Tensor) -> np.ndarray:
    m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    m = m.astype(x.dtype)
    if m.ndim == 2:
        m = m[None, None]
    elif m.ndim == 3:
        m = m[:, None]
    if m.ndim != 4 or m.shape[1] != 1 or m.shape[2:] != x.shape[2:] or m.shape[0] not in (1, x.shape[0]):
        raise ShapeError(f"mask of shape {m.shape} does not broadcast over input {x.shape}")
    return m


def masked_moments_unchecked(x: Tensor, m: np.ndarray, eps: float = EPS) -> NormStats:
    """Masked statistics that tolerate empty masks (stats are then 0 / sqrt(eps)).

    ``m`` is a float (N or 1, 1, H, W) array of zeros and ones.
    """
    count = m.sum(axis=(2, 3), keepdims=True)
    inv = (1.0 / np.maximum(count, 1.0)).astype(x.dtype)
    weight = m * inv  # per-pixel share of the region total
    mu = sum_(mul(x, weight), (2, 3), keepdims=True)
    var = sum_(mul(square(sub(x, mu)), weight), (2, 3), keepdims=True)
    return NormStats(mu, sqrt(var + eps))


def masked_moments(x: Tensor, mask, eps: float = EPS) -> NormStats:
    """Per-channel mean/std over the pixels where ``mask`` is 1.

    Only active pixels enter the denominator, so a full mask gives exactly
    the spatial moments.
    """
    if x.ndim != 4:
        raise ShapeError(f"masked_moments expects NCHW input, got shape {x.shape}")
    m = _mask_array(mask, x)
    active = m.sum(axis=(1, 2, 3))
    if (active < 2).any():
        raise DegeneratePatch(f"mask needs at least 2 active pixels, got {int(active.min())}")
    return masked_moments_unchecked(x, m, eps)
