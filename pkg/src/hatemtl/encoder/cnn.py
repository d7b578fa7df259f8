"""Convolutional encoder: per-width conv banks, relu, max-over-time."""

from __future__ import annotations

import numpy as np

from .ops import linear, linear_bwd, relu, relu_bwd
from .params import EncoderConfig, EncoderParams


def _windows(x: np.ndarray, width: int) -> np.ndarray:
    """Sliding windows of `width` positions, flattened per window.

    (B, T, E) -> (B, T - width + 1, width * E); window t concatenates the
    embeddings at positions t .. t + width - 1.
    """
    b, t, e = x.shape
    span = t - width + 1
    return np.concatenate([x[:, i : span + i, :] for i in range(width)], axis=2)


def forward(
    params: EncoderParams, config: EncoderConfig, ids: np.ndarray
) -> tuple[np.ndarray, dict]:
    p = params.tensors
    x = p["embedding"][ids]
    feats = []
    per_width = []
    for w in config.kernel_widths:
        xw = _windows(x, w)
        z = linear(xw, p[f"conv{w}.w"], p[f"conv{w}.b"])
        r = relu(z)
        arg = r.argmax(axis=1)
        feats.append(np.take_along_axis(r, arg[:, None, :], axis=1)[:, 0, :])
        per_width.append({"xw": xw, "z": z, "arg": arg})
    h = np.concatenate(feats, axis=1)
    rep = linear(h, p["proj.w"], p["proj.b"])
    return rep, {"ids": ids, "x_shape": x.shape, "per_width": per_width, "h": h}


def backward(
    params: EncoderParams, config: EncoderConfig, cache: dict, d_rep: np.ndarray
) -> dict[str, np.ndarray]:
    p = params.tensors
    ids = cache["ids"]
    grads = {name: np.zeros_like(t) for name, t in p.items()}
    dh, grads["proj.w"], grads["proj.b"] = linear_bwd(cache["h"], p["proj.w"], d_rep)

    dx = np.zeros(cache["x_shape"], dtype=dh.dtype)
    offset = 0
    for w, wc in zip(config.kernel_widths, cache["per_width"]):
        f = config.num_filters
        dm = dh[:, offset : offset + f]
        offset += f
        dr = np.zeros_like(wc["z"])
        np.put_along_axis(dr, wc["arg"][:, None, :], dm[:, None, :], axis=1)
        dz = relu_bwd(wc["z"], dr)
        dxw, dkw, dkb = linear_bwd(wc["xw"], p[f"conv{w}.w"], dz)
        grads[f"conv{w}.w"] += dkw
        grads[f"conv{w}.b"] += dkb
        span = cache["x_shape"][1] - w + 1
        e = cache["x_shape"][2]
        for i in range(w):
            dx[:, i : span + i, :] += dxw[:, :, i * e : (i + 1) * e]
    np.add.at(grads["embedding"], ids, dx)
    return grads
