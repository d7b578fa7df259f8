"""Dataset loading, validation, and cross-validation splitting.

Corpora are JSON Lines files of labeled posts; user context lives in a
companion JSON Lines file keyed by user_id. Datasets are immutable after
load and safe to share across threads.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Iterable, Mapping, Sequence


class CorpusError(ValueError):
    """Raised on schema violations; message names the offending line."""


@dataclass(frozen=True)
class LoadIssue:
    path: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"{self.path}:{self.line}: {self.message}"


@dataclass(frozen=True)
class TaskId:
    """A classification task: short id plus its ordered label set."""

    id: str
    label_set: tuple[str, ...]

    def __post_init__(self):
        if not self.id:
            raise ValueError("task id must be non-empty")
        if not self.label_set:
            raise ValueError(f"task {self.id!r} has an empty label set")
        if len(set(self.label_set)) != len(self.label_set):
            raise ValueError(f"task {self.id!r} has duplicate labels")

    def label_index(self, label: str) -> int:
        return self.label_set.index(label)


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    task: TaskId
    text: str
    label: str
    user_id: str

    def __post_init__(self):
        if self.label not in self.task.label_set:
            raise ValueError(
                f"label {self.label!r} not in task {self.task.id!r} labels"
            )
        if not self.text.strip():
            raise ValueError(f"tweet {self.tweet_id!r} has empty text")


@dataclass(frozen=True)
class UserRecord:
    """Author profile: posting history (most recent first) plus the
    social-graph attributes the similarity features are computed from."""

    user_id: str
    history: tuple[str, ...] = ()
    following: frozenset[str] = frozenset()
    followers: frozenset[str] = frozenset()
    mentioned: Mapping[str, int] = field(default_factory=dict)
    retweeted: Mapping[str, int] = field(default_factory=dict)
    favourited: Mapping[str, int] = field(default_factory=dict)
    hashtags: Mapping[str, int] = field(default_factory=dict)
    interests: frozenset[str] = frozenset()
    profile_text: str = ""

    def __post_init__(self):
        if not self.user_id:
            raise ValueError("user_id must be non-empty")
        for name in ("mentioned", "retweeted", "favourited", "hashtags"):
            counts = getattr(self, name)
            if any(c < 1 for c in counts.values()):
                raise ValueError(f"{name} counts must be >= 1 for {self.user_id!r}")

    @property
    def is_cold(self) -> bool:
        return not self.history


def cold_user(user_id: str) -> UserRecord:
    return UserRecord(user_id=user_id)


@dataclass(frozen=True)
class Dataset:
    task: TaskId
    records: tuple[TweetRecord, ...]
    users: Mapping[str, UserRecord]

    def __post_init__(self):
        if not self.records:
            raise ValueError(f"dataset for task {self.task.id!r} has no records")
        missing = {r.user_id for r in self.records} - set(self.users)
        if missing:
            raise ValueError(f"records reference unknown users: {sorted(missing)[:5]}")

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, TweetRecord]:
        return {r.tweet_id: r for r in self.records}


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: frozenset[str]
    val_ids: frozenset[str]
    test_ids: frozenset[str]

    def __post_init__(self):
        if self.train_ids & self.val_ids or self.train_ids & self.test_ids or (
            self.val_ids & self.test_ids
        ):
            raise ValueError(f"fold {self.fold_index} partitions overlap")


def _require(obj: dict, key: str, path: str, lineno: int) -> object:
    if key not in obj:
        raise CorpusError(f"{path}:{lineno}: missing field {key!r}")
    return obj[key]


def _str_field(obj: dict, key: str, path: str, lineno: int) -> str:
    val = _require(obj, key, path, lineno)
    if not isinstance(val, str):
        raise CorpusError(f"{path}:{lineno}: field {key!r} must be a string")
    return val


def _read_jsonl(
    path: Path, strict: bool, issues: list[LoadIssue]
) -> Iterable[tuple[int, dict]]:
    raw = path.read_bytes()
    for lineno, line in enumerate(raw.split(b"\n"), start=1):
        if not line.strip():
            continue
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            if strict:
                raise CorpusError(f"{path}:{lineno}: invalid UTF-8 ({exc})") from exc
            issues.append(LoadIssue(str(path), lineno, f"invalid UTF-8: {exc}"))
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            if strict:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            issues.append(LoadIssue(str(path), lineno, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            if strict:
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            issues.append(LoadIssue(str(path), lineno, "expected a JSON object"))
            continue
        yield lineno, obj


def load_users(
    path: str | Path, strict: bool = True, issues: list[LoadIssue] | None = None
) -> dict[str, UserRecord]:
    """Load the user context file (JSON Lines, one object per user)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"users file not found: {path}")
    collected = issues if issues is not None else []
    users: dict[str, UserRecord] = {}
    for lineno, obj in _read_jsonl(path, strict, collected):
        try:
            uid = _str_field(obj, "user_id", str(path), lineno)
            record = UserRecord(
                user_id=uid,
                history=tuple(obj.get("history", ())),
                following=frozenset(obj.get("following", ())),
                followers=frozenset(obj.get("followers", ())),
                mentioned=dict(Counter(obj.get("mentioned", ()))),
                retweeted=dict(Counter(obj.get("retweeted", ()))),
                favourited=dict(Counter(obj.get("favourited", ()))),
                hashtags=dict(Counter(obj.get("hashtags", ()))),
                interests=frozenset(obj.get("interests", ())),
                profile_text=obj.get("profile_text", ""),
            )
        except (ValueError, TypeError) as exc:
            if strict:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
            collected.append(LoadIssue(str(path), lineno, str(exc)))
            continue
        if uid in users:
            msg = f"duplicate user_id {uid!r}"
            if strict:
                raise CorpusError(f"{path}:{lineno}: {msg}")
            collected.append(LoadIssue(str(path), lineno, msg))
            continue
        users[uid] = record
    return users


def load_corpus(
    path: str | Path,
    task: TaskId,
    users: Mapping[str, UserRecord] | None = None,
    strict: bool = True,
    issues: list[LoadIssue] | None = None,
) -> Dataset:
    """Load and validate a labeled corpus file for one task.

    Every schema violation is reported with its line number; in strict mode
    the first violation raises CorpusError, otherwise offending lines are
    skipped and recorded in `issues`. Users absent from the provided user
    map are admitted as cold users with no history.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    collected = issues if issues is not None else []
    records: list[TweetRecord] = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path, strict, collected):
        try:
            tweet_id = _str_field(obj, "tweet_id", str(path), lineno)
            text = _str_field(obj, "text", str(path), lineno)
            label = _str_field(obj, "label", str(path), lineno)
            user_id = _str_field(obj, "user_id", str(path), lineno)
        except CorpusError as exc:
            if strict:
                raise
            collected.append(LoadIssue(str(path), lineno, str(exc)))
            continue
        if label not in task.label_set:
            msg = f"unknown label {label!r} for task {task.id!r}"
            if strict:
                raise CorpusError(f"{path}:{lineno}: {msg}")
            collected.append(LoadIssue(str(path), lineno, msg))
            continue
        if not text.strip():
            msg = f"empty text for tweet {tweet_id!r}"
            if strict:
                raise CorpusError(f"{path}:{lineno}: {msg}")
            collected.append(LoadIssue(str(path), lineno, msg))
            continue
        if tweet_id in seen:
            msg = f"duplicate tweet_id {tweet_id!r}"
            if strict:
                raise CorpusError(f"{path}:{lineno}: {msg}")
            collected.append(LoadIssue(str(path), lineno, msg))
            continue
        seen.add(tweet_id)
        records.append(TweetRecord(tweet_id, task, text, label, user_id))
    if not records:
        raise CorpusError(f"{path}: no valid records")
    user_map = dict(users) if users else {}
    for r in records:
        user_map.setdefault(r.user_id, cold_user(r.user_id))
    return Dataset(task=task, records=tuple(records), users=user_map)


def class_distribution(ds: Dataset) -> dict[str, int]:
    """Label counts in task label order; absent labels report 0."""
    counts = Counter(r.label for r in ds.records)
    return {label: counts.get(label, 0) for label in ds.task.label_set}


def _apportion(total: int, weights: Sequence[int]) -> list[int]:
    """Largest-remainder apportionment of `total` across integer weights."""
    pool = sum(weights)
    if pool == 0 or total == 0:
        return [0] * len(weights)
    exact = [total * w / pool for w in weights]
    base = [int(x) for x in exact]
    short = total - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (base[i] - exact[i], i))
    for i in order[:short]:
        base[i] += 1
    return base


def kfold_split(
    ds: Dataset, k: int, val_fraction: float = 0.15, seed: int = 0
) -> list[FoldSplit]:
    """Deterministic stratified k-fold splits.

    Each record lands in exactly one test fold; within a fold the remaining
    pool is divided so that val/(val+train) matches val_fraction to within
    one record. Stratification deals each label's shuffled ids round-robin
    across folds, so per-fold class proportions track the dataset's.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must be in (0, 1)")
    if len(ds.records) < k:
        raise ValueError(f"{len(ds.records)} records cannot fill {k} folds")

    rng = Random(seed)
    by_label: dict[str, list[str]] = {label: [] for label in ds.task.label_set}
    for r in ds.records:
        by_label[r.label].append(r.tweet_id)

    test_folds: list[set[str]] = [set() for _ in range(k)]
    for label in ds.task.label_set:
        ids = sorted(by_label[label])
        if 0 < len(ids) < k:
            warnings.warn(
                f"label {label!r} has {len(ids)} records, fewer than {k} folds",
                stacklevel=2,
            )
        rng.shuffle(ids)
        for i, tweet_id in enumerate(ids):
            test_folds[i % k].add(tweet_id)

    splits: list[FoldSplit] = []
    for fold in range(k):
        pool_by_label = {
            label: sorted(set(by_label[label]) - test_folds[fold])
            for label in ds.task.label_set
        }
        pool_size = sum(len(v) for v in pool_by_label.values())
        val_total = round(pool_size * val_fraction)
        per_label = _apportion(
            val_total, [len(pool_by_label[label]) for label in ds.task.label_set]
        )
        val_ids: set[str] = set()
        for label, take in zip(ds.task.label_set, per_label):
            ids = pool_by_label[label]
            rng.shuffle(ids)
            val_ids.update(ids[:take])
        train_ids = {
            r.tweet_id
            for r in ds.records
            if r.tweet_id not in test_folds[fold] and r.tweet_id not in val_ids
        }
        splits.append(
            FoldSplit(
                fold_index=fold,
                train_ids=frozenset(train_ids),
                val_ids=frozenset(val_ids),
                test_ids=frozenset(test_folds[fold]),
            )
        )
    return splits


def records_for(ds: Dataset, ids: frozenset[str] | set[str]) -> list[TweetRecord]:
    """Records selected by id, in corpus order."""
    return [r for r in ds.records if r.tweet_id in ids]
