"""Tweet-level feature extraction.

Covers the hand-crafted feature block of the classifier input: surface
counts (hashtags, emoticons, letter cases, positive/negative words), a
lexicon-based sentiment score, and Porter-stemmed uni/bi/trigram TF-IDF
weights over a corpus-built vocabulary.

All functions are pure; vocabularies and lexicons are immutable after
construction.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import porter

NEGATION_WINDOW = 3
NEGATION_DAMP = -0.74
SENTIMENT_ALPHA = 15.0
DEFAULT_MAX_FEATURES = 10_000

_HASHTAG_RE = re.compile(r"#\w+\Z")
_EDGE_PUNCT_RE = re.compile(r"^\W+|\W+$", re.UNICODE)

# Unicode ranges counted as emoticons in addition to the shipped ASCII list:
# the Emoticons block and Supplemental Symbols and Pictographs.
_EMOJI_RANGES = ((0x1F600, 0x1F64F), (0x1F900, 0x1F9FF))


def _load_data_text(name: str) -> str:
    return resources.files("hatemtl.data").joinpath(name).read_text("utf-8")


def _ascii_emoticons() -> frozenset[str]:
    lines = _load_data_text("emoticons.txt").splitlines()
    return frozenset(ln for ln in lines if ln and not ln.startswith("#"))


_ASCII_EMOTICONS = _ascii_emoticons()


def raw_tokens(text: str) -> list[str]:
    """Split on Unicode whitespace without any cleanup."""
    return text.split()


def strip_token(token: str) -> str:
    """Strip edge punctuation, keeping a leading '#' or '@' marker."""
    prefix = ""
    if token[:1] in "#@":
        prefix, token = token[0], token[1:]
    core = _EDGE_PUNCT_RE.sub("", token)
    return prefix + core if core else ""


def basic_tokens(text: str) -> list[str]:
    """Lowercased whitespace tokens with edge punctuation stripped."""
    out = []
    for tok in raw_tokens(text.lower()):
        cleaned = strip_token(tok)
        if cleaned:
            out.append(cleaned)
    return out


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, strip, and Porter-stem every token."""
    return [porter.stem(tok) for tok in basic_tokens(text)]


def is_hashtag(token: str) -> bool:
    return _HASHTAG_RE.match(strip_token(token)) is not None


def is_emoticon(token: str) -> bool:
    return token in _ASCII_EMOTICONS


def _emoji_chars(text: str) -> int:
    return sum(
        1 for ch in text if any(lo <= ord(ch) <= hi for lo, hi in _EMOJI_RANGES)
    )


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class SentimentLexicon:
    """Token valences in [-4, 4] plus a set of negation markers."""

    valence: dict[str, float]
    negators: frozenset[str]

    def __post_init__(self):
        if not self.valence:
            raise LexiconError("lexicon has no valence entries")
        for tok, v in self.valence.items():
            if not -4.0 <= v <= 4.0:
                raise LexiconError(f"valence out of [-4, 4] for {tok!r}: {v}")
        overlap = self.negators & self.valence.keys()
        if overlap:
            raise LexiconError(f"negators also carry valence: {sorted(overlap)}")

    @classmethod
    def from_file(cls, path: str | Path) -> "SentimentLexicon":
        """Parse a lexicon file: `token<TAB>valence` lines, with
        `!negator<TAB>token` lines declaring negation markers."""
        return cls._parse(Path(path).read_text("utf-8"), str(path))

    @classmethod
    def default(cls) -> "SentimentLexicon":
        return cls._parse(_load_data_text("lexicon.txt"), "<bundled lexicon>")

    @classmethod
    def _parse(cls, text: str, origin: str) -> "SentimentLexicon":
        valence: dict[str, float] = {}
        negators: set[str] = set()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if parts[0] == "!negator":
                if len(parts) != 2 or not parts[1]:
                    raise LexiconError(f"{origin}:{lineno}: bad negator line")
                negators.add(parts[1])
                continue
            if len(parts) != 2:
                raise LexiconError(f"{origin}:{lineno}: expected token<TAB>valence")
            try:
                valence[parts[0]] = float(parts[1])
            except ValueError as exc:
                raise LexiconError(f"{origin}:{lineno}: bad valence {parts[1]!r}") from exc
        return cls(valence=valence, negators=frozenset(negators))


@dataclass(frozen=True)
class SurfaceCounts:
    hashtags: int
    emoticons: int
    uppercase_letters: int
    lowercase_letters: int
    positive_words: int
    negative_words: int

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.hashtags,
                self.emoticons,
                self.uppercase_letters,
                self.lowercase_letters,
                self.positive_words,
                self.negative_words,
            ],
            dtype=np.float64,
        )


def count_surface_features(text: str, lexicon: SentimentLexicon) -> SurfaceCounts:
    """Count hashtags, emoticons, letter cases, and signed lexicon hits."""
    toks = raw_tokens(text)
    hashtags = sum(1 for t in toks if is_hashtag(t))
    emoticons = sum(1 for t in toks if is_emoticon(t)) + _emoji_chars(text)
    upper = sum(1 for ch in text if ch.isupper())
    lower = sum(1 for ch in text if ch.islower())
    pos = neg = 0
    for tok in basic_tokens(text):
        v = lexicon.valence.get(tok)
        if v is None:
            continue
        if v > 0:
            pos += 1
        elif v < 0:
            neg += 1
    return SurfaceCounts(hashtags, emoticons, upper, lower, pos, neg)


def sentiment_score(text: str, lexicon: SentimentLexicon) -> float:
    """Valence-sum sentiment in [-1, 1].

    Each lexicon token's valence is damped by NEGATION_DAMP when a negator
    occurs within the NEGATION_WINDOW preceding tokens; the damped sum s is
    squashed to s / sqrt(s^2 + SENTIMENT_ALPHA).
    """
    toks = basic_tokens(text)
    total = 0.0
    for i, tok in enumerate(toks):
        v = lexicon.valence.get(tok)
        if v is None:
            continue
        window = toks[max(0, i - NEGATION_WINDOW) : i]
        if any(t in lexicon.negators for t in window):
            v *= NEGATION_DAMP
        total += v
    if total == 0.0:
        return 0.0
    return total / math.sqrt(total * total + SENTIMENT_ALPHA)


@dataclass(frozen=True)
class SparseVector:
    """Sorted-index sparse vector over a fixed-dimension space."""

    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray  # float64, no explicit zeros expected
    dim: int

    @classmethod
    def zero(cls, dim: int) -> "SparseVector":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64), dim)

    @classmethod
    def from_items(cls, items: dict[int, float], dim: int) -> "SparseVector":
        if not items:
            return cls.zero(dim)
        idx = np.array(sorted(items), dtype=np.int64)
        val = np.array([items[i] for i in idx], dtype=np.float64)
        return cls(idx, val, dim)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        out[self.indices] = self.values
        return out

    def dot(self, other: "SparseVector") -> float:
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        i = j = 0
        acc = 0.0
        while i < self.nnz and j < other.nnz:
            a, b = self.indices[i], other.indices[j]
            if a == b:
                acc += float(self.values[i] * other.values[j])
                i += 1
                j += 1
            elif a < b:
                i += 1
            else:
                j += 1
        return acc


def extract_ngrams(tokens: Sequence[str], orders: Iterable[int] = (1, 2, 3)) -> list[str]:
    """All n-grams of the given orders, joined with '_'."""
    grams = []
    for n in orders:
        for i in range(len(tokens) - n + 1):
            grams.append("_".join(tokens[i : i + n]))
    return grams


@dataclass(frozen=True)
class NGramVocabulary:
    """Document-frequency ranked n-gram index over a training corpus."""

    grams: dict[str, int]
    document_frequency: dict[str, int]
    corpus_size: int

    def __post_init__(self):
        if sorted(self.grams.values()) != list(range(len(self.grams))):
            raise ValueError("vocabulary indices must be contiguous from 0")
        for g, df in self.document_frequency.items():
            if g in self.grams and df > self.corpus_size:
                raise ValueError(f"df({g!r}) exceeds corpus size")

    def __len__(self) -> int:
        return len(self.grams)

    def idf(self, gram: str) -> float:
        df = self.document_frequency[gram]
        return math.log((1.0 + self.corpus_size) / (1.0 + df)) + 1.0

    def to_json(self) -> str:
        ranked = sorted(self.grams, key=self.grams.get)
        return json.dumps(
            {
                "grams": ranked,
                "document_frequency": {g: self.document_frequency[g] for g in ranked},
                "corpus_size": self.corpus_size,
            }
        )

    @classmethod
    def from_json(cls, payload: str) -> "NGramVocabulary":
        obj = json.loads(payload)
        grams = {g: i for i, g in enumerate(obj["grams"])}
        return cls(
            grams=grams,
            document_frequency={g: int(df) for g, df in obj["document_frequency"].items()},
            corpus_size=int(obj["corpus_size"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), "utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NGramVocabulary":
        return cls.from_json(Path(path).read_text("utf-8"))


def build_ngram_vocab(
    corpus: Sequence[Sequence[str]], max_features: int = DEFAULT_MAX_FEATURES
) -> NGramVocabulary:
    """Rank uni/bi/trigrams by document frequency (ties lexicographic) and
    keep the top max_features."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    df: Counter[str] = Counter()
    for tokens in corpus:
        df.update(set(extract_ngrams(tokens)))
    ranked = sorted(df, key=lambda g: (-df[g], g))[:max_features]
    return NGramVocabulary(
        grams={g: i for i, g in enumerate(ranked)},
        document_frequency={g: df[g] for g in ranked},
        corpus_size=len(corpus),
    )


def tfidf_vector(tokens: Sequence[str], vocab: NGramVocabulary) -> SparseVector:
    """L2-normalized tf-idf weights; grams outside the vocabulary are ignored.

    weight(g) = tf(g) * (ln((1 + N) / (1 + df(g))) + 1), then the whole
    vector is scaled to unit L2 norm (zero vector when nothing matches).
    """
    tf = Counter(g for g in extract_ngrams(tokens) if g in vocab.grams)
    if not tf:
        return SparseVector.zero(len(vocab))
    items = {vocab.grams[g]: count * vocab.idf(g) for g, count in tf.items()}
    vec = SparseVector.from_items(items, len(vocab))
    return SparseVector(vec.indices, vec.values / vec.norm(), vec.dim)


@dataclass(frozen=True)
class TweetFeatureVector:
    """Dense surface block plus sparse tf-idf block for one text.

    dense_part order: hashtags, emoticons, uppercase letters, lowercase
    letters, positive words, negative words, sentiment score.
    """

    dense_part: np.ndarray
    sparse_part: SparseVector

    DENSE_DIM = 7


def tweet_feature_vector(
    text: str, vocab: NGramVocabulary, lexicon: SentimentLexicon
) -> TweetFeatureVector:
    counts = count_surface_features(text, lexicon)
    dense = np.append(counts.as_array(), sentiment_score(text, lexicon))
    sparse = tfidf_vector(normalize_tokens(text), vocab)
    return TweetFeatureVector(dense_part=dense, sparse_part=sparse)
