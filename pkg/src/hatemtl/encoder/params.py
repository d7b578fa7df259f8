"""Encoder configuration and the parameter container.

Defaults mirror the reference experiment settings: the CNN uses 100
filters with kernel widths 1 through 4, the GRU uses 100 hidden nodes,
and the small transformer runs 2 layers with 2 heads at width 64.
Weights initialize from a seeded uniform(-0.05, 0.05); biases start at
zero and layer-norm gains at one.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .tokenizer import Tokenizer

KINDS = ("transformer", "cnn", "gru")

INIT_SCALE = 0.05


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "transformer"
    embedding_dim: int = 64
    output_dim: int = 64
    layers: int = 2
    heads: int = 2
    hidden_dim: int = 128
    num_filters: int = 100
    kernel_widths: tuple[int, ...] = (1, 2, 3, 4)
    hidden_nodes: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.kind == "transformer" and self.embedding_dim % self.heads != 0:
            raise ValueError("embedding_dim must divide evenly across heads")
        if self.kind == "cnn" and (
            self.num_filters < 1 or not self.kernel_widths
        ):
            raise ValueError("cnn needs at least one filter and kernel width")
        if min((self.embedding_dim, self.output_dim)) < 1:
            raise ValueError("dimensions must be positive")

    @property
    def pre_projection_dim(self) -> int:
        """Width of the pooled representation before the output projection."""
        if self.kind == "transformer":
            return self.embedding_dim
        if self.kind == "cnn":
            return self.num_filters * len(self.kernel_widths)
        return self.hidden_nodes

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "embedding_dim": self.embedding_dim,
            "output_dim": self.output_dim,
            "layers": self.layers,
            "heads": self.heads,
            "hidden_dim": self.hidden_dim,
            "num_filters": self.num_filters,
            "kernel_widths": list(self.kernel_widths),
            "hidden_nodes": self.hidden_nodes,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EncoderConfig":
        obj = dict(obj)
        if "kernel_widths" in obj:
            obj["kernel_widths"] = tuple(obj["kernel_widths"])
        return cls(**obj)


class EncoderParams:
    """Named weight tensors with a flat view for gradient checking."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = dict(tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def names(self) -> list[str]:
        return list(self.tensors)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {n: t.shape for n, t in self.tensors.items()}

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.tensors.values())).dtype

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "EncoderParams":
        return EncoderParams({n: t.copy() for n, t in self.tensors.items()})

    def astype(self, dtype) -> "EncoderParams":
        return EncoderParams({n: t.astype(dtype) for n, t in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors.values()])

    def set_flat(self, vec: np.ndarray) -> None:
        offset = 0
        for t in self.tensors.values():
            t[...] = vec[offset : offset + t.size].reshape(t.shape)
            offset += t.size
        if offset != vec.size:
            raise ValueError("flat vector length does not match parameter count")

    def validate_finite(self) -> None:
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise ValueError(f"non-finite values in parameter {name!r}")


def init_params(
    config: EncoderConfig,
    tokenizer: Tokenizer,
    seed: int = 0,
    dtype=np.float32,
) -> EncoderParams:
    rng = np.random.default_rng(seed)
    d = config.embedding_dim

    def u(*shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape).astype(dtype)

    def zeros(*shape):
        return np.zeros(shape, dtype=dtype)

    def ones(*shape):
        return np.ones(shape, dtype=dtype)

    tensors: dict[str, np.ndarray] = {"embedding": u(tokenizer.vocab_size, d)}
    if config.kind == "transformer":
        tensors["pos"] = u(tokenizer.max_length, d)
        for i in range(config.layers):
            for gate in ("wq", "wk", "wv", "wo"):
                tensors[f"l{i}.attn.{gate}"] = u(d, d)
            for gate in ("bq", "bk", "bv", "bo"):
                tensors[f"l{i}.attn.{gate}"] = zeros(d)
            tensors[f"l{i}.ln1.g"] = ones(d)
            tensors[f"l{i}.ln1.b"] = zeros(d)
            tensors[f"l{i}.ffn.w1"] = u(d, config.hidden_dim)
            tensors[f"l{i}.ffn.b1"] = zeros(config.hidden_dim)
            tensors[f"l{i}.ffn.w2"] = u(config.hidden_dim, d)
            tensors[f"l{i}.ffn.b2"] = zeros(d)
            tensors[f"l{i}.ln2.g"] = ones(d)
            tensors[f"l{i}.ln2.b"] = zeros(d)
    elif config.kind == "cnn":
        if max(config.kernel_widths) > tokenizer.max_length:
            raise ValueError("kernel width exceeds padded sequence length")
        for w in config.kernel_widths:
            tensors[f"conv{w}.w"] = u(w * d, config.num_filters)
            tensors[f"conv{w}.b"] = zeros(config.num_filters)
    else:  # gru
        h = config.hidden_nodes
        for gate in ("z", "r", "h"):
            tensors[f"gru.w{gate}"] = u(d, h)
            tensors[f"gru.u{gate}"] = u(h, h)
            tensors[f"gru.b{gate}"] = zeros(h)
    tensors["proj.w"] = u(config.pre_projection_dim, config.output_dim)
    tensors["proj.b"] = zeros(config.output_dim)
    return EncoderParams(tensors)


def load_pretrained_embeddings(
    path: str | Path, tokenizer: Tokenizer, params: EncoderParams
) -> int:
    """Overwrite embedding rows from a text file of `token d-floats` lines.

    Tokens absent from the tokenizer vocabulary are skipped; returns the
    number of rows loaded.
    """
    emb = params["embedding"]
    dim = emb.shape[1]
    loaded = 0
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        token, values = parts[0], parts[1:]
        if len(values) != dim:
            raise ValueError(
                f"{path}:{lineno}: expected {dim} floats, got {len(values)}"
            )
        idx = tokenizer.vocab.get(token)
        if idx is None:
            continue
        emb[idx] = np.asarray([float(v) for v in values], dtype=emb.dtype)
        loaded += 1
    return loaded
