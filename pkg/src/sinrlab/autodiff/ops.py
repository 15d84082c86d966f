"""Differentiable primitives used by the attention model.

Every op takes :class:`Tensor` (or array-like) inputs and returns a new
tensor whose backward rule is stored on it.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor, as_tensor, record, unbroadcast

MASK_NEG = -1e9  # additive mask value for forbidden attention logits


def _check_broadcast(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from exc


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return record(a.data + b.data, (a, b),
                  lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return record(a.data - b.data, (a, b),
                  lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return record(a.data * b.data, (a, b),
                  lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return record(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return record(a.data @ b.data, (a, b), backward)


def affine(x, w, b) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``."""
    return add(matmul(x, w), b)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)
    return record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def total(a) -> Tensor:
    """Sum of all entries."""
    a = as_tensor(a)
    return record(np.sum(a.data), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return record(np.where(pos, a.data, slope * a.data), (a,),
                  lambda g: (np.where(pos, g, slope * g),))


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply the affine ``gamma``/``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise ShapeMismatch(f"layer_norm params {gamma.shape}/{beta.shape} for input {x.shape}")
    n = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        dxhat = g * gamma.data
        dx = inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return record(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


def masked_softmax(logits, mask) -> Tensor:
    """Softmax over the last axis restricted to allowed entries.

    ``mask`` is additive: 0 where attention is allowed, ``MASK_NEG`` (or
    ``-inf``) where it is not.  Forbidden entries get exactly zero weight
    and rows with nothing allowed return all zeros.
    """
    logits = as_tensor(logits)
    mask = np.asarray(mask, dtype=np.float64)
    if np.broadcast_shapes(mask.shape, logits.shape) != logits.shape:
        raise ShapeMismatch(f"mask {mask.shape} for logits {logits.shape}")
    allowed = np.broadcast_to(mask > MASK_NEG / 2, logits.shape)
    z = np.where(allowed, logits.data + mask, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.where(allowed, np.exp(z - m), 0.0)
    s = e.sum(axis=-1, keepdims=True)
    w = e / np.where(s > 0, s, 1.0)

    def backward(g):
        return (w * (g - (g * w).sum(axis=-1, keepdims=True)),)

    return record(w, (logits,), backward)


def concat_heads(x) -> Tensor:
    """(batch, heads, n, d) -> (batch, n, heads * d)."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeMismatch(f"concat_heads expects 4 axes, got {x.shape}")
    b, h, n, d = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (b, n, h * d))
