"""Differentiable primitives shared by the encoder kinds.

Forward functions return whatever the matching backward needs; dtypes
follow the inputs so the same code runs float32 for training and float64
for finite-difference verification.
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-5


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_bwd(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_bwd(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dw, db); x and dy may carry leading batch/time axes."""
    in_dim, out_dim = w.shape
    x2 = x.reshape(-1, in_dim)
    dy2 = dy.reshape(-1, out_dim)
    dw = x2.T @ dy2
    db = dy2.sum(axis=0)
    dx = (dy2 @ w.T).reshape(x.shape)
    return dx, dw, db


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_bwd(probs: np.ndarray, dy: np.ndarray, axis: int = -1) -> np.ndarray:
    inner = (dy * probs).sum(axis=axis, keepdims=True)
    return probs * (dy - inner)


def layer_norm(
    x: np.ndarray, gain: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, tuple]:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return gain * xhat + bias, (xhat, inv, gain)


def layer_norm_bwd(
    cache: tuple, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv, gain = cache
    dxhat = dy * gain
    dgain = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    dbias = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dgain, dbias


def cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean categorical cross-entropy.

    Returns (loss, probs, dlogits) where dlogits already carries the 1/B
    mean reduction.
    """
    n, c = logits.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError("label index out of range for logit width")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = float(-logp[np.arange(n), labels].mean())
    probs = np.exp(logp)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, probs, dlogits
