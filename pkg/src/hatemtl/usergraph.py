"""Social-graph user similarity and similar-tweet selection.

Seven bounded pairwise features feed a weighted similarity score; the
top-k scoring users supply their semantically closest tweets as the
inter-user context for a target post. Pools are scored exhaustively.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import UserRecord
from .textfeat import extract_ngrams, normalize_tokens

FEATURE_NAMES = (
    "follow_overlap",
    "mention_affinity",
    "retweet_affinity",
    "favourite_affinity",
    "hashtag_overlap",
    "interest_overlap",
    "profile_similarity",
)

UNIFORM_WEIGHTS = (1.0 / 7,) * 7
DEFAULT_NEIGHBORS = 3
DEFAULT_TWEETS_PER_NEIGHBOR = 5


@dataclass(frozen=True)
class SimilarityFeatures:
    follow_overlap: float
    mention_affinity: float
    retweet_affinity: float
    favourite_affinity: float
    hashtag_overlap: float
    interest_overlap: float
    profile_similarity: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name} out of [0, 1]: {v}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    components: SimilarityFeatures


@dataclass(frozen=True)
class NeighborSelection:
    target_user: str
    neighbors: tuple[tuple[str, SimilarityScore], ...]

    def __post_init__(self):
        scores = [s.value for _, s in self.neighbors]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("neighbor scores must be non-increasing")
        if any(uid == self.target_user for uid, _ in self.neighbors):
            raise ValueError("target cannot be its own neighbor")


def _jaccard(a: frozenset | set, b: frozenset | set) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def _interaction_affinity(
    u: UserRecord, v: UserRecord, attr: str
) -> float:
    """Directed interaction counts symmetrized over both users' totals."""
    u_counts: Mapping[str, int] = getattr(u, attr)
    v_counts: Mapping[str, int] = getattr(v, attr)
    total = sum(u_counts.values()) + sum(v_counts.values())
    if total == 0:
        return 0.0
    cross = u_counts.get(v.user_id, 0) + v_counts.get(u.user_id, 0)
    return cross / total


def _shared_item_affinity(u_counts: Mapping[str, int], v_counts: Mapping[str, int]) -> float:
    """Multiset overlap of shared items over both users' totals."""
    total = sum(u_counts.values()) + sum(v_counts.values())
    if total == 0:
        return 0.0
    shared = sum(min(c, v_counts[item]) for item, c in u_counts.items() if item in v_counts)
    return 2.0 * shared / total


class SimilarityScorer:
    """Pairwise feature computation with per-user caches.

    Profile similarity is the cosine of tf-idf vectors built over the
    pair's two profile texts; with a two-document corpus the weights
    depend only on each gram's term frequency and whether the other
    profile shares it, so the cosine is computed directly from cached
    gram counts (equal to the vocabulary-built result).
    """

    _IDF_SHARED = 1.0  # ln(3/3) + 1
    _IDF_UNIQUE = math.log(3.0 / 2.0) + 1.0

    def __init__(self):
        self._grams: dict[str, Counter[str]] = {}

    def _profile_grams(self, user: UserRecord) -> Counter[str]:
        cached = self._grams.get(user.user_id)
        if cached is None:
            tokens = normalize_tokens(user.profile_text)
            cached = Counter(extract_ngrams(tokens))
            self._grams[user.user_id] = cached
        return cached

    def profile_similarity(self, u: UserRecord, v: UserRecord) -> float:
        a, b = self._profile_grams(u), self._profile_grams(v)
        if not a or not b:
            return 0.0

        def weight(tf: int, shared: bool) -> float:
            return tf * (self._IDF_SHARED if shared else self._IDF_UNIQUE)

        dot = sum(weight(a[g], True) * weight(b[g], True) for g in a.keys() & b.keys())
        if dot == 0.0:
            return 0.0
        norm_a = math.sqrt(sum(weight(tf, g in b) ** 2 for g, tf in a.items()))
        norm_b = math.sqrt(sum(weight(tf, g in a) ** 2 for g, tf in b.items()))
        return min(1.0, max(0.0, dot / (norm_a * norm_b)))

    def features(self, u: UserRecord, v: UserRecord) -> SimilarityFeatures:
        if u.user_id == v.user_id:
            raise ValueError("similarity is defined between distinct users")
        return SimilarityFeatures(
            follow_overlap=_jaccard(
                u.following | u.followers, v.following | v.followers
            ),
            mention_affinity=_interaction_affinity(u, v, "mentioned"),
            retweet_affinity=_interaction_affinity(u, v, "retweeted"),
            favourite_affinity=_shared_item_affinity(u.favourited, v.favourited),
            hashtag_overlap=_jaccard(set(u.hashtags), set(v.hashtags)),
            interest_overlap=_jaccard(u.interests, v.interests),
            profile_similarity=self.profile_similarity(u, v),
        )


def similarity_features(u: UserRecord, v: UserRecord) -> SimilarityFeatures:
    """The seven bounded similarity components; symmetric in (u, v)."""
    return SimilarityScorer().features(u, v)


def tsim_score(
    f: SimilarityFeatures, weights: Sequence[float] = UNIFORM_WEIGHTS
) -> SimilarityScore:
    """Weighted mean of the seven components; weights must sum to 1."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (7,):
        raise ValueError("exactly seven weights required")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    value = float(np.clip(w @ f.as_array(), 0.0, 1.0))
    return SimilarityScore(value=value, components=f)


def top_k_similar(
    target: UserRecord,
    pool: Sequence[UserRecord],
    k: int = DEFAULT_NEIGHBORS,
    weights: Sequence[float] = UNIFORM_WEIGHTS,
    scorer: SimilarityScorer | None = None,
) -> NeighborSelection:
    """The k highest-similarity users; ties break on ascending user_id.

    Pass a shared SimilarityScorer when scoring many targets over the same
    pool so per-user profile state is derived once.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scorer = scorer or SimilarityScorer()
    scored = []
    for other in pool:
        if other.user_id == target.user_id:
            continue
        score = tsim_score(scorer.features(target, other), weights)
        scored.append((other.user_id, score))
    scored.sort(key=lambda item: (-item[1].value, item[0]))
    return NeighborSelection(target_user=target.user_id, neighbors=tuple(scored[:k]))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def select_inter_tweets(
    target_text: str,
    neighbors: NeighborSelection,
    users: Mapping[str, UserRecord],
    embed: Callable[[str], np.ndarray],
    per_user: int = DEFAULT_TWEETS_PER_NEIGHBOR,
) -> list[str]:
    """For each neighbor (in score order), the per_user history tweets
    closest to the target by embedding cosine; cold neighbors skip."""
    if per_user < 1:
        raise ValueError("per_user must be >= 1")
    target_vec = embed(target_text)
    out: list[str] = []
    for uid, _score in neighbors.neighbors:
        user = users.get(uid)
        if user is None or not user.history:
            continue
        ranked = sorted(
            enumerate(user.history),
            key=lambda pair: (-_cosine(embed(pair[1]), target_vec), pair[0]),
        )
        out.extend(text for _i, text in ranked[:per_user])
    return out


def neighbors_to_jsonl(selections: Sequence[NeighborSelection], path: str | Path) -> None:
    """Export selections for offline inspection and reuse between runs."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for sel in selections:
            fh.write(
                json.dumps(
                    {
                        "target_user": sel.target_user,
                        "neighbors": [
                            {
                                "user_id": uid,
                                "score": score.value,
                                "components": {
                                    n: getattr(score.components, n)
                                    for n in FEATURE_NAMES
                                },
                            }
                            for uid, score in sel.neighbors
                        ],
                    }
                )
                + "\n"
            )


def neighbors_from_jsonl(path: str | Path) -> list[NeighborSelection]:
    out = []
    for line in Path(path).read_text("utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        neighbors = tuple(
            (
                n["user_id"],
                SimilarityScore(
                    value=n["score"], components=SimilarityFeatures(**n["components"])
                ),
            )
            for n in obj["neighbors"]
        )
        out.append(NeighborSelection(target_user=obj["target_user"], neighbors=neighbors))
    return out
