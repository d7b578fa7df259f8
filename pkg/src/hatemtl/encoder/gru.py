"""Gated recurrent encoder; the final (masked) hidden state is pooled.

Update convention: h_t = (1 - z_t) * h_{t-1} + z_t * h~_t, with reset
gate r_t applied to the previous state inside the candidate. Pad steps
copy the state through, so the output is the hidden state at each
sequence's last real token.
"""

from __future__ import annotations

import numpy as np

from .ops import linear, linear_bwd, sigmoid
from .params import EncoderConfig, EncoderParams
from .tokenizer import PAD_ID


def forward(
    params: EncoderParams, config: EncoderConfig, ids: np.ndarray
) -> tuple[np.ndarray, dict]:
    p = params.tensors
    dtype = params.dtype
    b, t = ids.shape
    hdim = config.hidden_nodes
    x = p["embedding"][ids]
    mask = (ids != PAD_ID).astype(dtype)
    h = np.zeros((b, hdim), dtype=dtype)
    steps = []
    for step in range(t):
        xt = x[:, step, :]
        m = mask[:, step : step + 1]
        z = sigmoid(linear(xt, p["gru.wz"], p["gru.bz"]) + h @ p["gru.uz"])
        r = sigmoid(linear(xt, p["gru.wr"], p["gru.br"]) + h @ p["gru.ur"])
        rh = r * h
        c = np.tanh(linear(xt, p["gru.wh"], p["gru.bh"]) + rh @ p["gru.uh"])
        h_new = (1.0 - z) * h + z * c
        steps.append({"xt": xt, "h_prev": h, "z": z, "r": r, "rh": rh, "c": c, "m": m})
        h = m * h_new + (1.0 - m) * h
    rep = linear(h, p["proj.w"], p["proj.b"])
    return rep, {"ids": ids, "steps": steps, "h_final": h}


def backward(
    params: EncoderParams, config: EncoderConfig, cache: dict, d_rep: np.ndarray
) -> dict[str, np.ndarray]:
    p = params.tensors
    ids = cache["ids"]
    grads = {name: np.zeros_like(t) for name, t in p.items()}
    dh, grads["proj.w"], grads["proj.b"] = linear_bwd(
        cache["h_final"], p["proj.w"], d_rep
    )

    dx_steps = []
    for step in reversed(cache["steps"]):
        m, z, r, c, h_prev, rh = (
            step["m"], step["z"], step["r"], step["c"], step["h_prev"], step["rh"],
        )
        dh_new = dh * m
        dh_prev = dh * (1.0 - m)
        dz = dh_new * (c - h_prev)
        dc = dh_new * z
        dh_prev += dh_new * (1.0 - z)

        dc_pre = dc * (1.0 - c * c)
        _, dwh, dbh = linear_bwd(step["xt"], p["gru.wh"], dc_pre)
        grads["gru.wh"] += dwh
        grads["gru.bh"] += dbh
        grads["gru.uh"] += rh.T @ dc_pre
        drh = dc_pre @ p["gru.uh"].T
        dr = drh * h_prev
        dh_prev += drh * r
        dxt = dc_pre @ p["gru.wh"].T

        dz_pre = dz * z * (1.0 - z)
        _, dwz, dbz = linear_bwd(step["xt"], p["gru.wz"], dz_pre)
        grads["gru.wz"] += dwz
        grads["gru.bz"] += dbz
        grads["gru.uz"] += h_prev.T @ dz_pre
        dh_prev += dz_pre @ p["gru.uz"].T
        dxt += dz_pre @ p["gru.wz"].T

        dr_pre = dr * r * (1.0 - r)
        _, dwr, dbr = linear_bwd(step["xt"], p["gru.wr"], dr_pre)
        grads["gru.wr"] += dwr
        grads["gru.br"] += dbr
        grads["gru.ur"] += h_prev.T @ dr_pre
        dh_prev += dr_pre @ p["gru.ur"].T
        dxt += dr_pre @ p["gru.wr"].T

        dx_steps.append(dxt)
        dh = dh_prev

    dx = np.stack(dx_steps[::-1], axis=1)
    np.add.at(grads["embedding"], ids, dx)
    return grads
