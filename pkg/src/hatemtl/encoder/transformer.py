"""Small post-norm transformer encoder with masked mean pooling."""

from __future__ import annotations

import numpy as np

from .ops import layer_norm, layer_norm_bwd, linear, linear_bwd, relu, relu_bwd, softmax, softmax_bwd
from .params import EncoderConfig, EncoderParams
from .tokenizer import PAD_ID

_MASK_NEG = 1e9


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, t, d = x.shape
    return x.reshape(b, t, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def forward(
    params: EncoderParams, config: EncoderConfig, ids: np.ndarray
) -> tuple[np.ndarray, dict]:
    p = params.tensors
    dtype = params.dtype
    b, t = ids.shape
    mask = (ids != PAD_ID).astype(dtype)  # (B, T), BOS guarantees sum >= 1
    x = p["embedding"][ids] + p["pos"][:t]
    scale = 1.0 / np.sqrt(config.embedding_dim // config.heads)

    layer_caches = []
    for i in range(config.layers):
        pre = f"l{i}"
        q = linear(x, p[f"{pre}.attn.wq"], p[f"{pre}.attn.bq"])
        k = linear(x, p[f"{pre}.attn.wk"], p[f"{pre}.attn.bk"])
        v = linear(x, p[f"{pre}.attn.wv"], p[f"{pre}.attn.bv"])
        qh, kh, vh = (_split_heads(z, config.heads) for z in (q, k, v))
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        scores = scores + (mask[:, None, None, :] - 1.0) * _MASK_NEG
        attn = softmax(scores)
        ctx = _merge_heads(attn @ vh)
        attn_out = linear(ctx, p[f"{pre}.attn.wo"], p[f"{pre}.attn.bo"])
        h1 = x + attn_out
        n1, ln1_cache = layer_norm(h1, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
        f_pre = linear(n1, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.b1"])
        f_act = relu(f_pre)
        ffn_out = linear(f_act, p[f"{pre}.ffn.w2"], p[f"{pre}.ffn.b2"])
        h2 = n1 + ffn_out
        out, ln2_cache = layer_norm(h2, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
        layer_caches.append(
            {
                "x": x,
                "qh": qh,
                "kh": kh,
                "vh": vh,
                "attn": attn,
                "ctx": ctx,
                "ln1": ln1_cache,
                "n1": n1,
                "f_pre": f_pre,
                "f_act": f_act,
                "ln2": ln2_cache,
            }
        )
        x = out

    denom = mask.sum(axis=1, keepdims=True)
    pooled = (x * mask[:, :, None]).sum(axis=1) / denom
    rep = linear(pooled, p["proj.w"], p["proj.b"])
    cache = {
        "ids": ids,
        "mask": mask,
        "denom": denom,
        "scale": scale,
        "layers": layer_caches,
        "final_x": x,
        "pooled": pooled,
    }
    return rep, cache


def backward(
    params: EncoderParams, config: EncoderConfig, cache: dict, d_rep: np.ndarray
) -> dict[str, np.ndarray]:
    p = params.tensors
    ids, mask, denom = cache["ids"], cache["mask"], cache["denom"]
    grads = {name: np.zeros_like(t) for name, t in p.items()}

    d_pooled, grads["proj.w"], grads["proj.b"] = linear_bwd(
        cache["pooled"], p["proj.w"], d_rep
    )
    dx = (d_pooled[:, None, :] / denom[:, :, None]) * mask[:, :, None]

    for i in reversed(range(config.layers)):
        pre = f"l{i}"
        lc = cache["layers"][i]
        dh2, grads[f"{pre}.ln2.g"], grads[f"{pre}.ln2.b"] = layer_norm_bwd(
            lc["ln2"], dx
        )
        d_ffn_out = dh2
        d_f_act, dw2, db2 = linear_bwd(lc["f_act"], p[f"{pre}.ffn.w2"], d_ffn_out)
        grads[f"{pre}.ffn.w2"] += dw2
        grads[f"{pre}.ffn.b2"] += db2
        d_f_pre = relu_bwd(lc["f_pre"], d_f_act)
        dn1_ffn, dw1, db1 = linear_bwd(lc["n1"], p[f"{pre}.ffn.w1"], d_f_pre)
        grads[f"{pre}.ffn.w1"] += dw1
        grads[f"{pre}.ffn.b1"] += db1
        dn1 = dh2 + dn1_ffn
        dh1, grads[f"{pre}.ln1.g"], grads[f"{pre}.ln1.b"] = layer_norm_bwd(
            lc["ln1"], dn1
        )
        d_attn_out = dh1
        d_ctx, dwo, dbo = linear_bwd(lc["ctx"], p[f"{pre}.attn.wo"], d_attn_out)
        grads[f"{pre}.attn.wo"] += dwo
        grads[f"{pre}.attn.bo"] += dbo
        d_ctx_h = _split_heads(d_ctx, config.heads)
        d_attn = d_ctx_h @ lc["vh"].transpose(0, 1, 3, 2)
        d_vh = lc["attn"].transpose(0, 1, 3, 2) @ d_ctx_h
        d_scores = softmax_bwd(lc["attn"], d_attn) * cache["scale"]
        d_qh = d_scores @ lc["kh"]
        d_kh = d_scores.transpose(0, 1, 3, 2) @ lc["qh"]
        dq, dk, dv = (_merge_heads(z) for z in (d_qh, d_kh, d_vh))
        dx_q, dwq, dbq = linear_bwd(lc["x"], p[f"{pre}.attn.wq"], dq)
        dx_k, dwk, dbk = linear_bwd(lc["x"], p[f"{pre}.attn.wk"], dk)
        dx_v, dwv, dbv = linear_bwd(lc["x"], p[f"{pre}.attn.wv"], dv)
        grads[f"{pre}.attn.wq"] += dwq
        grads[f"{pre}.attn.bq"] += dbq
        grads[f"{pre}.attn.wk"] += dwk
        grads[f"{pre}.attn.bk"] += dbk
        grads[f"{pre}.attn.wv"] += dwv
        grads[f"{pre}.attn.bv"] += dbv
        dx = dh1 + dx_q + dx_k + dx_v

    grads["pos"][: ids.shape[1]] += dx.sum(axis=0)
    np.add.at(grads["embedding"], ids, dx)
    return grads
