"""Single-task and multi-task training of the shared encoder.

The multi-task model shares one encoder across tasks with a per-task
softmax head. Training visits tasks round-robin, one optimizer step per
mini-batch; an epoch is one pass over the largest task's training set
with smaller tasks cycling through reshuffled repeats. Each step updates
the shared encoder plus only the active task's head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Mapping, Sequence

import numpy as np

from . import checkpoint
from .corpus import Dataset, FoldSplit, TaskId, records_for
from .encoder import (
    EncoderConfig,
    EncoderParams,
    TextEncoder,
    Tokenizer,
    init_params,
    loss_and_gradients,
)
from .evaluation import score_predictions
from .seeding import derive_seed


@dataclass(frozen=True)
class TrainingConfig:
    """Optimization settings; the defaults match the reference protocol
    (learning rate 2e-5, batch size 32, 3 epochs, 5 aggregated runs)."""

    learning_rate: float = 2e-5
    batch_size: int = 32
    epochs: int = 3
    runs: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.runs < 1:
            raise ValueError("invalid training configuration")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "runs": self.runs,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "seed": self.seed,
        }


class Adam:
    """Adaptive-moment optimizer with per-tensor step counters, so heads
    that update sparsely keep correct bias correction."""

    def __init__(self, config: TrainingConfig):
        self.lr = config.learning_rate
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.eps
        self._state: dict[str, tuple[int, np.ndarray, np.ndarray]] = {}

    def step(self, tensors: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]):
        for name, g in grads.items():
            t, m, v = self._state.get(
                name, (0, np.zeros_like(g, dtype=np.float64), np.zeros_like(g, dtype=np.float64))
            )
            t += 1
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            tensors[name] -= update.astype(tensors[name].dtype)
            self._state[name] = (t, m, v)


@dataclass
class TaskHead:
    task: TaskId
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.w.shape[1] != len(self.task.label_set) or self.b.shape != (
            self.w.shape[1],
        ):
            raise ValueError(f"head shapes do not match task {self.task.id!r}")

    def copy(self) -> "TaskHead":
        return TaskHead(self.task, self.w.copy(), self.b.copy())


def init_head(task: TaskId, output_dim: int, seed: int, dtype=np.float32) -> TaskHead:
    rng = np.random.default_rng(seed)
    w = rng.uniform(-0.05, 0.05, size=(output_dim, len(task.label_set))).astype(dtype)
    b = np.zeros(len(task.label_set), dtype=dtype)
    return TaskHead(task=task, w=w, b=b)


@dataclass
class STLModel:
    params: EncoderParams
    config: EncoderConfig
    tokenizer: Tokenizer
    head: TaskHead

    @property
    def text_encoder(self) -> TextEncoder:
        return TextEncoder(self.params, self.config, self.tokenizer)

    def predict(self, texts: Sequence[str], batch_size: int = 128) -> list[str]:
        return predict_labels(self.text_encoder, self.head, texts, batch_size)


@dataclass
class MTLModel:
    params: EncoderParams
    config: EncoderConfig
    tokenizer: Tokenizer
    heads: dict[str, TaskHead]

    def __post_init__(self):
        for task_id, head in self.heads.items():
            if head.task.id != task_id:
                raise ValueError(f"head key {task_id!r} does not match its task")
            if head.w.shape[0] != self.config.output_dim:
                raise ValueError(f"head {task_id!r} input dim mismatch")

    @property
    def text_encoder(self) -> TextEncoder:
        return TextEncoder(self.params, self.config, self.tokenizer)

    def predict(
        self, task_id: str, texts: Sequence[str], batch_size: int = 128
    ) -> list[str]:
        return predict_labels(
            self.text_encoder, self.heads[task_id], texts, batch_size
        )


def predict_labels(
    encoder: TextEncoder, head: TaskHead, texts: Sequence[str], batch_size: int = 128
) -> list[str]:
    """Argmax labels; numpy argmax breaks ties at the lowest class index."""
    labels: list[str] = []
    for start in range(0, len(texts), batch_size):
        rep = encoder.encode_batch(texts[start : start + batch_size])
        logits = rep @ head.w + head.b
        labels.extend(head.task.label_set[i] for i in logits.argmax(axis=1))
    return labels


def _encode_split(
    ds: Dataset, ids: frozenset[str], tokenizer: Tokenizer
) -> tuple[np.ndarray, np.ndarray, list[str], list[str]]:
    records = records_for(ds, ids)
    texts = [r.text for r in records]
    labels = [r.label for r in records]
    x = tokenizer.encode_batch(texts)
    y = np.asarray([ds.task.label_index(l) for l in labels], dtype=np.int64)
    return x, y, texts, labels


def _event(
    run: int, fold: int, task: str, epoch: int, step: int, loss: float | None,
    val_macro_f1: float | None,
) -> dict:
    return {
        "run": run,
        "fold": fold,
        "task": task,
        "epoch": epoch,
        "step": step,
        "loss": loss,
        "val_macro_f1": val_macro_f1,
    }


def write_events(events: Sequence[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")


class _BatchStream:
    """Endless shuffled mini-batch index stream over one training set."""

    def __init__(self, size: int, batch_size: int, seed: int):
        self._rng = Random(seed)
        self._size = size
        self._batch = batch_size
        self._queue: list[np.ndarray] = []

    def batches_per_pass(self) -> int:
        return (self._size + self._batch - 1) // self._batch

    def next(self) -> np.ndarray:
        if not self._queue:
            order = list(range(self._size))
            self._rng.shuffle(order)
            self._queue = [
                np.asarray(order[i : i + self._batch], dtype=np.int64)
                for i in range(0, self._size, self._batch)
            ]
        return self._queue.pop(0)


def _validation_f1(
    params: EncoderParams,
    config: EncoderConfig,
    tokenizer: Tokenizer,
    head: TaskHead,
    ds: Dataset,
    val_ids: frozenset[str],
) -> float | None:
    records = records_for(ds, val_ids)
    if not records:
        return None
    enc = TextEncoder(params, config, tokenizer)
    predicted = predict_labels(enc, head, [r.text for r in records])
    report = score_predictions(
        [r.label for r in records], predicted, ds.task.label_set
    )
    return report.macro_f1


def train_stl(
    dataset: Dataset,
    split: FoldSplit,
    encoder_config: EncoderConfig,
    training_config: TrainingConfig,
    tokenizer: Tokenizer | None = None,
    max_vocab: int = 20_000,
    max_length: int = 64,
    run: int = 0,
    fold: int | None = None,
    events: list[dict] | None = None,
) -> tuple[STLModel, list[dict]]:
    """Train one encoder plus one head on a single task.

    Returns the model and its per-epoch history (loss mean, validation
    macro-F1). Identical inputs and seed give identical parameters.
    """
    if not split.train_ids:
        raise ValueError("training split is empty")
    fold_idx = split.fold_index if fold is None else fold
    if tokenizer is None:
        train_texts = [r.text for r in records_for(dataset, split.train_ids)]
        from .encoder import tokenizer_from_texts

        tokenizer = tokenizer_from_texts(train_texts, max_vocab, max_length)
    x_train, y_train, _texts, _labels = _encode_split(
        dataset, split.train_ids, tokenizer
    )

    seed = training_config.seed
    params = init_params(
        encoder_config, tokenizer, seed=derive_seed(seed, "stl-init", dataset.task.id)
    )
    head = init_head(
        dataset.task,
        encoder_config.output_dim,
        derive_seed(seed, "stl-head", dataset.task.id),
    )
    optimizer = Adam(training_config)
    stream = _BatchStream(
        len(y_train),
        training_config.batch_size,
        derive_seed(seed, "stl-order", dataset.task.id),
    )
    history: list[dict] = []
    step = 0
    for epoch in range(training_config.epochs):
        losses = []
        for _ in range(stream.batches_per_pass()):
            idx = stream.next()
            loss, _logits, grads, dw, db = loss_and_gradients(
                x_train[idx], y_train[idx], params, encoder_config, head.w, head.b
            )
            optimizer.step(params.tensors, grads)
            optimizer.step({"head.w": head.w, "head.b": head.b},
                           {"head.w": dw, "head.b": db})
            losses.append(loss)
            step += 1
            if events is not None:
                events.append(
                    _event(run, fold_idx, dataset.task.id, epoch, step, loss, None)
                )
        val_f1 = _validation_f1(
            params, encoder_config, tokenizer, head, dataset, split.val_ids
        )
        history.append(
            {"epoch": epoch, "mean_loss": float(np.mean(losses)), "val_macro_f1": val_f1}
        )
        if events is not None:
            events.append(
                _event(run, fold_idx, dataset.task.id, epoch, step, None, val_f1)
            )
    return STLModel(params, encoder_config, tokenizer, head), history


def train_mtl(
    tasks: Mapping[str, tuple[Dataset, FoldSplit]],
    encoder_config: EncoderConfig,
    training_config: TrainingConfig,
    tokenizer: Tokenizer | None = None,
    max_vocab: int = 20_000,
    max_length: int = 64,
    run: int = 0,
    fold: int | None = None,
    events: list[dict] | None = None,
) -> tuple[MTLModel, dict[str, list[dict]]]:
    """Jointly train a shared encoder with one head per task.

    Tasks are visited round-robin in the mapping's declared order; a step
    on one task never touches another task's head.
    """
    if len(tasks) < 2:
        raise ValueError("multi-task training needs at least two tasks")
    for task_id, (ds, split) in tasks.items():
        if not split.train_ids:
            raise ValueError(f"task {task_id!r} has an empty training split")

    if tokenizer is None:
        all_texts: list[str] = []
        for task_id in tasks:
            ds, split = tasks[task_id]
            all_texts.extend(r.text for r in records_for(ds, split.train_ids))
        from .encoder import tokenizer_from_texts

        tokenizer = tokenizer_from_texts(all_texts, max_vocab, max_length)

    seed = training_config.seed
    params = init_params(encoder_config, tokenizer, seed=derive_seed(seed, "mtl-init"))
    heads: dict[str, TaskHead] = {}
    encoded: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    streams: dict[str, _BatchStream] = {}
    for task_id, (ds, split) in tasks.items():
        heads[task_id] = init_head(
            ds.task, encoder_config.output_dim, derive_seed(seed, "mtl-head", task_id)
        )
        x, y, _t, _l = _encode_split(ds, split.train_ids, tokenizer)
        encoded[task_id] = (x, y)
        streams[task_id] = _BatchStream(
            len(y), training_config.batch_size, derive_seed(seed, "mtl-order", task_id)
        )

    rounds_per_epoch = max(s.batches_per_pass() for s in streams.values())
    optimizer = Adam(training_config)
    history: dict[str, list[dict]] = {task_id: [] for task_id in tasks}
    step = 0
    for epoch in range(training_config.epochs):
        losses: dict[str, list[float]] = {task_id: [] for task_id in tasks}
        for _round in range(rounds_per_epoch):
            for task_id in tasks:
                x, y = encoded[task_id]
                head = heads[task_id]
                idx = streams[task_id].next()
                loss, _logits, grads, dw, db = loss_and_gradients(
                    x[idx], y[idx], params, encoder_config, head.w, head.b
                )
                optimizer.step(params.tensors, grads)
                optimizer.step(
                    {f"head.{task_id}.w": head.w, f"head.{task_id}.b": head.b},
                    {f"head.{task_id}.w": dw, f"head.{task_id}.b": db},
                )
                losses[task_id].append(loss)
                step += 1
                if events is not None:
                    events.append(
                        _event(run, fold if fold is not None else -1, task_id,
                               epoch, step, loss, None)
                    )
        for task_id, (ds, split) in tasks.items():
            val_f1 = _validation_f1(
                params, encoder_config, tokenizer, heads[task_id], ds, split.val_ids
            )
            history[task_id].append(
                {
                    "epoch": epoch,
                    "mean_loss": float(np.mean(losses[task_id])),
                    "val_macro_f1": val_f1,
                }
            )
            if events is not None:
                events.append(
                    _event(run, fold if fold is not None else -1, task_id,
                           epoch, step, None, val_f1)
                )
    return MTLModel(params, encoder_config, tokenizer, heads), history


def transfer_shared(model: MTLModel) -> TextEncoder:
    """Deep-copy the shared encoder for downstream reuse; mutating the
    copy never affects the source model."""
    return TextEncoder(model.params.copy(), model.config, model.tokenizer)


def _tokenizer_manifest(tokenizer: Tokenizer) -> dict:
    return {"vocab": tokenizer.vocab, "max_length": tokenizer.max_length}


def _tokenizer_from_manifest(obj: dict) -> Tokenizer:
    return Tokenizer(vocab=dict(obj["vocab"]), max_length=int(obj["max_length"]))


def save_mtl_checkpoint(model: MTLModel, path: str | Path, seed: int | None = None):
    manifest = {
        "model": "mtl",
        "config": model.config.to_dict(),
        "tokenizer": _tokenizer_manifest(model.tokenizer),
        "tasks": {tid: list(h.task.label_set) for tid, h in model.heads.items()},
        "seed": seed,
    }
    tensors = {f"shared.{n}": t for n, t in model.params.tensors.items()}
    for tid, head in model.heads.items():
        tensors[f"head.{tid}.w"] = head.w
        tensors[f"head.{tid}.b"] = head.b
    checkpoint.save_container(path, manifest, tensors)


def load_mtl_checkpoint(path: str | Path) -> MTLModel:
    manifest, tensors = checkpoint.load_container(path)
    if manifest.get("model") != "mtl":
        raise checkpoint.CheckpointError(f"{path}: not a multi-task checkpoint")
    config = EncoderConfig.from_dict(manifest["config"])
    tokenizer = _tokenizer_from_manifest(manifest["tokenizer"])
    template = init_params(config, tokenizer, seed=0)
    expected = {f"shared.{n}": s for n, s in template.shapes().items()}
    for tid, labels in manifest["tasks"].items():
        expected[f"head.{tid}.w"] = (config.output_dim, len(labels))
        expected[f"head.{tid}.b"] = (len(labels),)
    checkpoint.verify_shapes(tensors, expected)
    params = EncoderParams(
        {n: tensors[f"shared.{n}"] for n in template.names()}
    )
    heads = {
        tid: TaskHead(
            TaskId(id=tid, label_set=tuple(labels)),
            tensors[f"head.{tid}.w"],
            tensors[f"head.{tid}.b"],
        )
        for tid, labels in manifest["tasks"].items()
    }
    return MTLModel(params, config, tokenizer, heads)


def save_stl_checkpoint(model: STLModel, path: str | Path, seed: int | None = None):
    manifest = {
        "model": "stl",
        "config": model.config.to_dict(),
        "tokenizer": _tokenizer_manifest(model.tokenizer),
        "tasks": {model.head.task.id: list(model.head.task.label_set)},
        "seed": seed,
    }
    tensors = {f"shared.{n}": t for n, t in model.params.tensors.items()}
    tensors[f"head.{model.head.task.id}.w"] = model.head.w
    tensors[f"head.{model.head.task.id}.b"] = model.head.b
    checkpoint.save_container(path, manifest, tensors)


def load_stl_checkpoint(path: str | Path) -> STLModel:
    manifest, tensors = checkpoint.load_container(path)
    if manifest.get("model") != "stl":
        raise checkpoint.CheckpointError(f"{path}: not a single-task checkpoint")
    config = EncoderConfig.from_dict(manifest["config"])
    tokenizer = _tokenizer_from_manifest(manifest["tokenizer"])
    ((tid, labels),) = manifest["tasks"].items()
    template = init_params(config, tokenizer, seed=0)
    expected = {f"shared.{n}": s for n, s in template.shapes().items()}
    expected[f"head.{tid}.w"] = (config.output_dim, len(labels))
    expected[f"head.{tid}.b"] = (len(labels),)
    checkpoint.verify_shapes(tensors, expected)
    params = EncoderParams({n: tensors[f"shared.{n}"] for n in template.names()})
    head = TaskHead(
        TaskId(id=tid, label_set=tuple(labels)),
        tensors[f"head.{tid}.w"],
        tensors[f"head.{tid}.b"],
    )
    return STLModel(params, config, tokenizer, head)
