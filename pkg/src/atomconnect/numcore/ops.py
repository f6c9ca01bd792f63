"""Fused primitives with hand-written backward rules."""

from __future__ import annotations

import numpy as np

from .tensor import DiffArray, _as_data, _make, add, matmul, mul, swapaxes

MASK_FILL = -1e30


def softmax(x: DiffArray, axis: int = -1, temperature: float = 1.0) -> DiffArray:
    """Softmax of ``x / temperature`` along ``axis``.

    The backward pass applies the closed-form Jacobian
    dy_a/dx_b = y_a (delta_ab - y_b) / temperature as a vector-Jacobian product.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    xd = _as_data(x)
    if xd.shape[axis] == 0:
        raise ValueError("empty softmax axis")
    s = xd / temperature
    e = np.exp(s - s.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)) / temperature,)

    return _make("softmax", y, [x], back)


def softmax_jacobian(y: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Dense Jacobian of a 1-D softmax output ``y``."""
    y = np.asarray(y, dtype=np.float64)
    return (np.diag(y) - np.outer(y, y)) / temperature


def log_softmax(x: DiffArray, axis: int = -1) -> DiffArray:
    xd = _as_data(x)
    if xd.shape[axis] == 0:
        raise ValueError("empty softmax axis")
    shifted = xd - xd.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make("log_softmax", out, [x], back)


def layer_norm(x: DiffArray, gain, bias, eps: float = 1e-5) -> DiffArray:
    """Normalize over the last axis, then apply ``gain`` and ``bias``."""
    xd, gd, bd = _as_data(x), _as_data(gain), _as_data(bias)
    d = xd.shape[-1]
    if gd.shape != (d,) or bd.shape != (d,):
        raise ValueError(f"layer_norm gain/bias must have shape ({d},)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gd + bd

    def back(g):
        gx = g * gd
        red = tuple(range(xd.ndim - 1))
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return _make("layer_norm", out, [x, gain, bias], back)


def scaled_dot_attention(q, k, v, key_mask=None, return_weights: bool = False):
    """softmax(q k^T / sqrt(d) + mask) v over the last two axes.

    ``key_mask`` is boolean and must broadcast against the score array
    ``(..., Lq, Lk)``; a shape ``(..., Lk)`` mask is read as per-key.
    Masked keys get the additive fill before the softmax and so receive
    exactly zero weight.
    """
    qd, kd, vd = _as_data(q), _as_data(k), _as_data(v)
    if qd.shape[-1] != kd.shape[-1]:
        raise ValueError("queries and keys must share the head dimension")
    if kd.shape[-2] != vd.shape[-2]:
        raise ValueError("values must have one row per key")
    scores = matmul(q, swapaxes(k, -1, -2)) * (1.0 / np.sqrt(qd.shape[-1]))
    if key_mask is not None:
        km = np.asarray(key_mask, dtype=bool)
        if km.ndim == scores.ndim - 1:
            km = km[..., None, :]
        km = np.broadcast_to(km, scores.shape)
        if not km.any(axis=-1).all():
            raise ValueError("fully masked attention row")
        scores = add(scores, np.where(km, 0.0, MASK_FILL))
    weights = softmax(scores, axis=-1)
    out = matmul(weights, v)
    return (out, weights) if return_weights else out


def cross_entropy_rows(logits: DiffArray, targets) -> DiffArray:
    """Per-row negative log-likelihood of integer ``targets``."""
    targets = np.asarray(targets, dtype=np.int64)
    lp = log_softmax(logits, axis=-1)
    rows = np.arange(targets.shape[0])
    return mul(lp[rows, targets], -1.0)
