"""Word-level tokenizer with a frequency-built vocabulary.

Encoded sequences always start with the sequence-start id and are padded
or truncated to exactly max_length positions; pad is id 0.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..textfeat import basic_tokens

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
NUM_SPECIALS = 3

DEFAULT_MAX_LENGTH = 64


@dataclass(frozen=True)
class Tokenizer:
    vocab: dict[str, int]
    max_length: int

    def __post_init__(self):
        ids = sorted(self.vocab.values())
        if ids != list(range(NUM_SPECIALS, NUM_SPECIALS + len(ids))):
            raise ValueError("vocabulary ids must be contiguous after the specials")
        if self.max_length < 2:
            raise ValueError("max_length must be >= 2")

    @property
    def vocab_size(self) -> int:
        return NUM_SPECIALS + len(self.vocab)

    def token_ids(self, tokens: Sequence[str]) -> list[int]:
        return [self.vocab.get(t, UNK_ID) for t in tokens]

    def encode_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        ids = [BOS_ID] + self.token_ids(tokens)
        ids = ids[: self.max_length]
        ids.extend([PAD_ID] * (self.max_length - len(ids)))
        return np.asarray(ids, dtype=np.int64)

    def encode(self, text: str) -> np.ndarray:
        return self.encode_tokens(basic_tokens(text))

    def encode_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.max_length), dtype=np.int64)
        return np.stack([self.encode(t) for t in texts])


def build_tokenizer(
    corpus: Sequence[Sequence[str]],
    max_vocab: int = 20_000,
    max_length: int = DEFAULT_MAX_LENGTH,
) -> Tokenizer:
    """Keep the max_vocab most frequent tokens, ties lexicographic."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    counts: Counter[str] = Counter()
    for tokens in corpus:
        counts.update(tokens)
    kept = sorted(counts, key=lambda t: (-counts[t], t))[:max_vocab]
    vocab = {tok: NUM_SPECIALS + i for i, tok in enumerate(kept)}
    return Tokenizer(vocab=vocab, max_length=max_length)


def tokenizer_from_texts(
    texts: Sequence[str],
    max_vocab: int = 20_000,
    max_length: int = DEFAULT_MAX_LENGTH,
) -> Tokenizer:
    return build_tokenizer([basic_tokens(t) for t in texts], max_vocab, max_length)
