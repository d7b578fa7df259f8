"""Encoding entry points: text to fixed-dimension vectors, batch loss,
and analytic gradients for training."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import cnn, gru, transformer
from .ops import cross_entropy
from .params import EncoderConfig, EncoderParams
from .tokenizer import Tokenizer

_KIND_MODULES = {"transformer": transformer, "cnn": cnn, "gru": gru}

DEFAULT_HISTORY_CAP = 200
DEFAULT_HISTORY_BATCH = 50


def _check_shapes(params: EncoderParams, config: EncoderConfig) -> None:
    pw = params["proj.w"]
    if pw.shape != (config.pre_projection_dim, config.output_dim):
        raise ValueError(
            f"projection shape {pw.shape} does not match config "
            f"({config.pre_projection_dim}, {config.output_dim})"
        )


def encode_ids(
    params: EncoderParams, config: EncoderConfig, ids: np.ndarray
) -> np.ndarray:
    """Inference-mode batch encoding of id matrices: (B, T) -> (B, D)."""
    _check_shapes(params, config)
    rep, _cache = _KIND_MODULES[config.kind].forward(params, config, ids)
    return rep


def encode_ids_with_cache(
    params: EncoderParams, config: EncoderConfig, ids: np.ndarray
) -> tuple[np.ndarray, dict]:
    _check_shapes(params, config)
    return _KIND_MODULES[config.kind].forward(params, config, ids)


def backward_from_repr(
    params: EncoderParams, config: EncoderConfig, cache: dict, d_rep: np.ndarray
) -> dict[str, np.ndarray]:
    return _KIND_MODULES[config.kind].backward(params, config, cache, d_rep)


class TextEncoder:
    """Frozen (params, config, tokenizer) bundle for inference."""

    def __init__(
        self, params: EncoderParams, config: EncoderConfig, tokenizer: Tokenizer
    ):
        _check_shapes(params, config)
        self.params = params
        self.config = config
        self.tokenizer = tokenizer

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    def encode(self, text: str) -> np.ndarray:
        return self.encode_batch([text])[0]

    def encode_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.output_dim), dtype=self.params.dtype)
        ids = self.tokenizer.encode_batch(list(texts))
        return encode_ids(self.params, self.config, ids)


def encode_text(
    text: str, tokenizer: Tokenizer, params: EncoderParams, config: EncoderConfig
) -> np.ndarray:
    """Encode one text to a length-output_dim vector."""
    ids = tokenizer.encode(text)[None, :]
    return encode_ids(params, config, ids)[0]


def forward_with_loss(
    batch: Sequence[tuple[str, int]],
    params: EncoderParams,
    config: EncoderConfig,
    head,
    tokenizer: Tokenizer,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and logits for (text, label-index) pairs."""
    texts = [t for t, _ in batch]
    labels = np.asarray([y for _, y in batch], dtype=np.int64)
    ids = tokenizer.encode_batch(texts)
    rep = encode_ids(params, config, ids)
    logits = rep @ head.w + head.b
    loss, _probs, _d = cross_entropy(logits, labels)
    return loss, logits


def loss_and_gradients(
    ids: np.ndarray,
    labels: np.ndarray,
    params: EncoderParams,
    config: EncoderConfig,
    head_w: np.ndarray,
    head_b: np.ndarray,
) -> tuple[float, np.ndarray, dict[str, np.ndarray], np.ndarray, np.ndarray]:
    """One forward/backward pass over an encoded batch.

    Returns (loss, logits, encoder grads, head weight grad, head bias grad).
    """
    rep, cache = encode_ids_with_cache(params, config, ids)
    logits = rep @ head_w + head_b
    loss, _probs, dlogits = cross_entropy(logits, labels)
    d_rep = dlogits @ head_w.T
    d_head_w = rep.T @ dlogits
    d_head_b = dlogits.sum(axis=0)
    grads = backward_from_repr(params, config, cache, d_rep)
    return loss, logits, grads, d_head_w, d_head_b


def gradient(
    params: EncoderParams,
    batch: Sequence[tuple[str, int]],
    config: EncoderConfig,
    head,
    tokenizer: Tokenizer,
) -> tuple[dict[str, np.ndarray], np.ndarray, np.ndarray]:
    """Analytic gradients of the batch loss for every parameter tensor."""
    texts = [t for t, _ in batch]
    labels = np.asarray([y for _, y in batch], dtype=np.int64)
    ids = tokenizer.encode_batch(texts)
    _loss, _logits, grads, dw, db = loss_and_gradients(
        ids, labels, params, config, head.w, head.b
    )
    return grads, dw, db


def mean_pool(vectors: np.ndarray, dim: int, dtype=np.float32) -> np.ndarray:
    if vectors.shape[0] == 0:
        return np.zeros(dim, dtype=dtype)
    return vectors.mean(axis=0)


def intra_user_representation(
    history: Sequence[str],
    encode_batch: Callable[[Sequence[str]], np.ndarray],
    output_dim: int,
    m_cap: int = DEFAULT_HISTORY_CAP,
    batch: int = DEFAULT_HISTORY_BATCH,
) -> np.ndarray:
    """Mean-pooled encoding of the author's m_cap most recent posts.

    Posts are encoded in chunks of `batch`, which changes throughput only,
    never the pooled value. Empty histories give the zero vector.
    """
    if m_cap < 1 or batch < 1:
        raise ValueError("m_cap and batch must be positive")
    recent = list(history[:m_cap])
    if not recent:
        return np.zeros(output_dim, dtype=np.float32)
    chunks = [
        encode_batch(recent[i : i + batch]) for i in range(0, len(recent), batch)
    ]
    return mean_pool(np.concatenate(chunks, axis=0), output_dim)


def inter_user_representation(
    tweets: Sequence[str],
    encode_batch: Callable[[Sequence[str]], np.ndarray],
    output_dim: int,
) -> np.ndarray:
    """Mean-pooled encoding of the selected similar-user tweets."""
    if not tweets:
        return np.zeros(output_dim, dtype=np.float32)
    return mean_pool(encode_batch(list(tweets)), output_dim)
