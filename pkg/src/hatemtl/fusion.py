"""Feature fusion: concatenate the encoded target post with the
intra-user, inter-user, and hand-crafted feature blocks, then classify
through a single fully connected softmax layer.

Upstream features are computed once with the transferred shared encoder
and stay frozen while the fusion layer trains. The wide tf-idf block
passes through a trainable linear projection (default 50 dims) before
concatenation; raw concatenation is available via projection_dim=0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import checkpoint
from .corpus import Dataset, TaskId
from .encoder import TextEncoder, inter_user_representation, intra_user_representation
from .evaluation import MetricsReport, score_predictions
from .mtl import Adam, TaskHead, TrainingConfig, _BatchStream
from .seeding import derive_seed
from .textfeat import (
    NGramVocabulary,
    SentimentLexicon,
    SparseVector,
    TweetFeatureVector,
    build_ngram_vocab,
    normalize_tokens,
    tweet_feature_vector,
)
from .usergraph import (
    DEFAULT_NEIGHBORS,
    DEFAULT_TWEETS_PER_NEIGHBOR,
    UNIFORM_WEIGHTS,
    SimilarityScorer,
    select_inter_tweets,
    top_k_similar,
)

DEFAULT_TB_PROJECTION = 50


@dataclass(frozen=True)
class FeatureMask:
    """Which context blocks join the target representation."""

    intra: bool = True
    inter: bool = True
    tb: bool = True

    @classmethod
    def none(cls) -> "FeatureMask":
        return cls(intra=False, inter=False, tb=False)

    @classmethod
    def all(cls) -> "FeatureMask":
        return cls()

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "FeatureMask":
        valid = {"intra", "inter", "tb"}
        unknown = set(names) - valid
        if unknown:
            raise ValueError(f"unknown feature blocks: {sorted(unknown)}")
        return cls(
            intra="intra" in names, inter="inter" in names, tb="tb" in names
        )

    def names(self) -> list[str]:
        return [n for n, on in
                (("intra", self.intra), ("inter", self.inter), ("tb", self.tb)) if on]


@dataclass(frozen=True)
class FeatureBundle:
    """The four per-post representations plus the active-block mask."""

    t: np.ndarray
    f_intra: np.ndarray
    f_inter: np.ndarray
    f_tb: TweetFeatureVector
    mask: FeatureMask = FeatureMask.all()

    def with_mask(self, mask: FeatureMask) -> "FeatureBundle":
        return replace(self, mask=mask)


def fuse(bundle: FeatureBundle, tb_projected: np.ndarray | None = None) -> np.ndarray:
    """Concatenate enabled blocks in fixed order:
    [t | f_intra | f_inter | f_tb dense | f_tb sparse (projected or raw)].
    """
    parts = [np.asarray(bundle.t, dtype=np.float64)]
    if bundle.mask.intra:
        parts.append(np.asarray(bundle.f_intra, dtype=np.float64))
    if bundle.mask.inter:
        parts.append(np.asarray(bundle.f_inter, dtype=np.float64))
    if bundle.mask.tb:
        parts.append(np.asarray(bundle.f_tb.dense_part, dtype=np.float64))
        if tb_projected is not None:
            parts.append(np.asarray(tb_projected, dtype=np.float64))
        else:
            parts.append(bundle.f_tb.sparse_part.toarray())
    return np.concatenate(parts)


@dataclass
class FusionModel:
    """Optional sparse-block projection plus the final softmax layer."""

    labels: tuple[str, ...]
    mask: FeatureMask
    w: np.ndarray
    b: np.ndarray
    tb_proj_w: np.ndarray | None = None
    tb_proj_b: np.ndarray | None = None

    @property
    def input_dim(self) -> int:
        return self.w.shape[0]

    @classmethod
    def from_task_head(cls, head: TaskHead) -> "FusionModel":
        """The reduction case: no context blocks, weights taken from a
        trained task head, so predictions match the plain classifier."""
        return cls(
            labels=tuple(head.task.label_set),
            mask=FeatureMask.none(),
            w=head.w.astype(np.float64),
            b=head.b.astype(np.float64),
        )

    def _project_tb(self, sparse: SparseVector) -> np.ndarray | None:
        if not self.mask.tb or self.tb_proj_w is None:
            return None
        out = self.tb_proj_b.copy()
        if sparse.nnz:
            out = out + sparse.values @ self.tb_proj_w[sparse.indices]
        return out

    def input_vector(self, bundle: FeatureBundle) -> np.ndarray:
        aligned = bundle.with_mask(self.mask)
        return fuse(aligned, self._project_tb(bundle.f_tb.sparse_part))

    def logits(self, bundle: FeatureBundle) -> np.ndarray:
        x = self.input_vector(bundle)
        if x.shape[0] != self.input_dim:
            raise ValueError(
                f"fused dimension {x.shape[0]} does not match model {self.input_dim}"
            )
        return x @ self.w + self.b


def predict(model: FusionModel, bundle: FeatureBundle) -> tuple[str, np.ndarray]:
    """Label and softmax distribution; argmax ties go to the lowest class
    index."""
    logits = model.logits(bundle)
    z = logits - logits.max()
    probs = np.exp(z)
    probs /= probs.sum()
    return model.labels[int(np.argmax(logits))], probs


def predict_batch(
    model: FusionModel, bundles: Sequence[FeatureBundle]
) -> list[str]:
    return [predict(model, b)[0] for b in bundles]


def train_fusion(
    bundles: Mapping[str, FeatureBundle],
    labels: Mapping[str, str],
    task: TaskId,
    train_ids: Sequence[str],
    training_config: TrainingConfig,
    mask: FeatureMask = FeatureMask.all(),
    tb_projection_dim: int = DEFAULT_TB_PROJECTION,
) -> FusionModel:
    """Cross-entropy training of the fusion layer on frozen features.

    bundles/labels are keyed by tweet_id; only train_ids participate.
    Deterministic for a fixed training_config.seed.
    """
    ids = [i for i in train_ids if i in bundles]
    if not ids:
        raise ValueError("no training bundles selected")
    sample = bundles[ids[0]]
    sparse_dim = sample.f_tb.sparse_part.dim
    use_proj = mask.tb and tb_projection_dim > 0

    seed = training_config.seed
    rng = np.random.default_rng(derive_seed(seed, "fusion-init", task.id))
    proj_w = proj_b = None
    if use_proj:
        proj_w = rng.uniform(-0.05, 0.05, size=(sparse_dim, tb_projection_dim))
        proj_b = np.zeros(tb_projection_dim)

    probe = FusionModel(
        labels=tuple(task.label_set),
        mask=mask,
        w=np.zeros((1, 1)),
        b=np.zeros(1),
        tb_proj_w=proj_w,
        tb_proj_b=proj_b,
    )
    in_dim = probe.input_vector(sample).shape[0]
    n_classes = len(task.label_set)
    w = rng.uniform(-0.05, 0.05, size=(in_dim, n_classes))
    b = np.zeros(n_classes)
    model = FusionModel(tuple(task.label_set), mask, w, b, proj_w, proj_b)

    y = np.asarray([task.label_index(labels[i]) for i in ids], dtype=np.int64)
    sparses = [bundles[i].f_tb.sparse_part for i in ids]
    if use_proj:
        base = np.stack(
            [fuse(bundles[i].with_mask(mask), np.zeros(tb_projection_dim)) for i in ids]
        )
        proj_span = slice(in_dim - tb_projection_dim, in_dim)
    else:
        base = np.stack([fuse(bundles[i].with_mask(mask)) for i in ids])
        proj_span = None

    optimizer = Adam(training_config)
    stream = _BatchStream(
        len(ids), training_config.batch_size, derive_seed(seed, "fusion-order", task.id)
    )
    for _epoch in range(training_config.epochs):
        for _ in range(stream.batches_per_pass()):
            idx = stream.next()
            x = base[idx].copy()
            if use_proj:
                for row, i in enumerate(idx):
                    sp = sparses[i]
                    x[row, proj_span] = model.tb_proj_b + (
                        sp.values @ model.tb_proj_w[sp.indices] if sp.nnz else 0.0
                    )
            logits = x @ model.w + model.b
            z = logits - logits.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            probs = np.exp(logp)
            dlogits = probs
            dlogits[np.arange(len(idx)), y[idx]] -= 1.0
            dlogits /= len(idx)
            grads = {"w": x.T @ dlogits, "b": dlogits.sum(axis=0)}
            tensors = {"w": model.w, "b": model.b}
            if use_proj:
                dx = dlogits @ model.w.T
                dproj = dx[:, proj_span]
                dpw = np.zeros_like(model.tb_proj_w)
                for row, i in enumerate(idx):
                    sp = sparses[i]
                    if sp.nnz:
                        dpw[sp.indices] += sp.values[:, None] * dproj[row][None, :]
                grads["tb_proj_w"] = dpw
                grads["tb_proj_b"] = dproj.sum(axis=0)
                tensors["tb_proj_w"] = model.tb_proj_w
                tensors["tb_proj_b"] = model.tb_proj_b
            optimizer.step(tensors, grads)
    return model


def evaluate_fusion(
    model: FusionModel,
    bundles: Mapping[str, FeatureBundle],
    labels: Mapping[str, str],
    ids: Sequence[str],
    label_set: Sequence[str],
) -> MetricsReport:
    selected = [i for i in ids if i in bundles]
    predicted = [predict(model, bundles[i])[0] for i in selected]
    return score_predictions([labels[i] for i in selected], predicted, label_set)


@dataclass(frozen=True)
class BundleBuilder:
    """Computes feature bundles for a dataset with a frozen encoder.

    Neighbor selection scores every user pair once per build; the tf-idf
    vocabulary comes from the dataset's own texts.
    """

    encoder: TextEncoder
    lexicon: SentimentLexicon
    vocab: NGramVocabulary
    neighbors: int = DEFAULT_NEIGHBORS
    tweets_per_neighbor: int = DEFAULT_TWEETS_PER_NEIGHBOR
    history_cap: int = 200
    history_batch: int = 50
    similarity_weights: tuple[float, ...] = UNIFORM_WEIGHTS

    @classmethod
    def for_dataset(
        cls,
        ds: Dataset,
        encoder: TextEncoder,
        lexicon: SentimentLexicon | None = None,
        max_features: int = 10_000,
        **kwargs,
    ) -> "BundleBuilder":
        vocab = build_ngram_vocab(
            [normalize_tokens(r.text) for r in ds.records], max_features
        )
        return cls(
            encoder=encoder,
            lexicon=lexicon or SentimentLexicon.default(),
            vocab=vocab,
            **kwargs,
        )

    def build(self, ds: Dataset) -> dict[str, FeatureBundle]:
        enc = self.encoder
        dim = enc.output_dim
        users = ds.users
        pool = sorted(users.values(), key=lambda u: u.user_id)
        author_ids = sorted({r.user_id for r in ds.records})

        # one encoding per distinct text: record texts plus every history
        # post of a record author or of anyone's potential neighbor
        unique_texts = sorted(
            {r.text for r in ds.records}
            | {post for u in pool for post in u.history}
        )
        vectors: dict[str, np.ndarray] = {}
        for start in range(0, len(unique_texts), 256):
            chunk = unique_texts[start : start + 256]
            for text, vec in zip(chunk, enc.encode_batch(chunk)):
                vectors[text] = vec
        embed = vectors.__getitem__
        embed_batch = lambda texts: (
            np.stack([vectors[t] for t in texts])
            if texts else np.zeros((0, dim), dtype=np.float32)
        )

        scorer = SimilarityScorer()
        selections = {}
        intra: dict[str, np.ndarray] = {}
        for uid in author_ids:
            user = users[uid]
            intra[uid] = intra_user_representation(
                user.history, embed_batch, dim,
                m_cap=self.history_cap, batch=self.history_batch,
            )
            selections[uid] = top_k_similar(
                user, pool, self.neighbors, self.similarity_weights, scorer=scorer
            )

        bundles: dict[str, FeatureBundle] = {}
        for record in ds.records:
            similar = select_inter_tweets(
                record.text,
                selections[record.user_id],
                users,
                embed,
                self.tweets_per_neighbor,
            )
            bundles[record.tweet_id] = FeatureBundle(
                t=vectors[record.text],
                f_intra=intra[record.user_id],
                f_inter=inter_user_representation(similar, embed_batch, dim),
                f_tb=tweet_feature_vector(record.text, self.vocab, self.lexicon),
            )
        return bundles


def save_bundles(bundles: Mapping[str, FeatureBundle], path: str | Path) -> None:
    """Cache bundles keyed by tweet_id so fusion reruns skip re-encoding."""
    ids = sorted(bundles)
    first = bundles[ids[0]]
    sparse_dim = first.f_tb.sparse_part.dim
    t = np.stack([bundles[i].t for i in ids])
    fi = np.stack([bundles[i].f_intra for i in ids])
    fe = np.stack([bundles[i].f_inter for i in ids])
    dense = np.stack([bundles[i].f_tb.dense_part for i in ids])
    ptr = np.zeros(len(ids) + 1, dtype=np.int64)
    idx_parts, val_parts = [], []
    for row, i in enumerate(ids):
        sp = bundles[i].f_tb.sparse_part
        ptr[row + 1] = ptr[row] + sp.nnz
        idx_parts.append(sp.indices)
        val_parts.append(sp.values)
    manifest = {
        "model": "bundles",
        "tweet_ids": ids,
        "sparse_dim": sparse_dim,
        "encoder_dim": int(t.shape[1]),
    }
    checkpoint.save_container(
        path,
        manifest,
        {
            "t": t,
            "f_intra": fi,
            "f_inter": fe,
            "tb_dense": dense,
            "tb_indices": np.concatenate(idx_parts) if idx_parts else np.zeros(0, np.int64),
            "tb_values": np.concatenate(val_parts) if val_parts else np.zeros(0),
            "tb_ptr": ptr,
        },
    )


def load_bundles(path: str | Path) -> dict[str, FeatureBundle]:
    manifest, tensors = checkpoint.load_container(path)
    if manifest.get("model") != "bundles":
        raise checkpoint.CheckpointError(f"{path}: not a feature bundle cache")
    ids = manifest["tweet_ids"]
    sparse_dim = int(manifest["sparse_dim"])
    ptr = tensors["tb_ptr"]
    out: dict[str, FeatureBundle] = {}
    for row, tweet_id in enumerate(ids):
        lo, hi = int(ptr[row]), int(ptr[row + 1])
        sparse = SparseVector(
            tensors["tb_indices"][lo:hi].astype(np.int64),
            tensors["tb_values"][lo:hi].astype(np.float64),
            sparse_dim,
        )
        out[tweet_id] = FeatureBundle(
            t=tensors["t"][row],
            f_intra=tensors["f_intra"][row],
            f_inter=tensors["f_inter"][row],
            f_tb=TweetFeatureVector(
                dense_part=tensors["tb_dense"][row].astype(np.float64),
                sparse_part=sparse,
            ),
        )
    return out


def save_fusion_checkpoint(model: FusionModel, path: str | Path) -> None:
    manifest = {
        "model": "fusion",
        "labels": list(model.labels),
        "mask": model.mask.names(),
        "has_projection": model.tb_proj_w is not None,
    }
    tensors = {"w": model.w, "b": model.b}
    if model.tb_proj_w is not None:
        tensors["tb_proj_w"] = model.tb_proj_w
        tensors["tb_proj_b"] = model.tb_proj_b
    checkpoint.save_container(path, manifest, tensors)


def load_fusion_checkpoint(path: str | Path) -> FusionModel:
    manifest, tensors = checkpoint.load_container(path)
    if manifest.get("model") != "fusion":
        raise checkpoint.CheckpointError(f"{path}: not a fusion checkpoint")
    return FusionModel(
        labels=tuple(manifest["labels"]),
        mask=FeatureMask.from_names(manifest["mask"]),
        w=tensors["w"].astype(np.float64),
        b=tensors["b"].astype(np.float64),
        tb_proj_w=tensors["tb_proj_w"].astype(np.float64)
        if manifest["has_projection"] else None,
        tb_proj_b=tensors["tb_proj_b"].astype(np.float64)
        if manifest["has_projection"] else None,
    )
