"""Synthetic corpus generators for tests, demos, and smoke workspaces.

The generators plant label signal in controlled places: in the post text,
in the author's posting history, in similar users' tweets, or in exact
per-group hateful-history counts, so downstream gains and profile means
can be asserted against construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Mapping, Sequence

from .corpus import Dataset, TaskId, TweetRecord, UserRecord


def _filler_vocab(size: int, stem: str = "filler") -> list[str]:
    return [f"{stem}{i:03d}" for i in range(size)]


def keyword_families(labels: Sequence[str], per_label: int, stem: str = "cue") -> dict[str, list[str]]:
    """Distinct signal-token families, one per label."""
    return {
        label: [f"{stem}_{label}_{i:02d}" for i in range(per_label)]
        for label in labels
    }


@dataclass(frozen=True)
class KeywordTaskSpec:
    """Controls for one generated keyword-signal task."""

    task: TaskId
    n_records: int
    signal_tokens_per_text: int = 2
    filler_tokens_per_text: int = 6
    signal_rate: float = 1.0
    label_noise: float = 0.0
    filler_vocab_size: int = 120


def keyword_dataset(
    spec: KeywordTaskSpec,
    families: Mapping[str, Sequence[str]],
    seed: int,
    users: Mapping[str, UserRecord] | None = None,
    user_per_record: bool = False,
) -> Dataset:
    """Labels are determined by which keyword family appears in the text.

    With signal_rate < 1, the remaining records are pure filler (their
    label is unrecoverable from text alone). label_noise flips the stored
    label to a random other label after text generation.
    """
    rng = Random(seed)
    filler = _filler_vocab(spec.filler_vocab_size)
    labels = spec.task.label_set
    records = []
    for i in range(spec.n_records):
        true_label = labels[i % len(labels)]
        tokens = []
        if rng.random() < spec.signal_rate:
            tokens.extend(
                rng.choices(list(families[true_label]), k=spec.signal_tokens_per_text)
            )
        tokens.extend(rng.choices(filler, k=spec.filler_tokens_per_text))
        rng.shuffle(tokens)
        stored = true_label
        if spec.label_noise > 0 and rng.random() < spec.label_noise:
            stored = rng.choice([l for l in labels if l != true_label])
        uid = f"{spec.task.id}_u{i:05d}" if user_per_record else f"{spec.task.id}_u{i % 37:05d}"
        records.append(
            TweetRecord(
                tweet_id=f"{spec.task.id}_t{i:05d}",
                task=spec.task,
                text=" ".join(tokens),
                label=stored,
                user_id=uid,
            )
        )
    user_map = dict(users) if users else {}
    return Dataset(
        task=spec.task,
        records=tuple(records),
        users={**{r.user_id: user_map.get(r.user_id, UserRecord(r.user_id)) for r in records}},
    )


def user_context_dataset(
    task: TaskId,
    n_records: int,
    seed: int,
    ambiguous_rate: float = 0.3,
    history_posts: int = 6,
    group_size: int = 8,
    filler_vocab_size: int = 120,
) -> Dataset:
    """Plants part of the label signal outside the post text.

    Roughly ambiguous_rate of the records carry no signal token in their
    text; their label shows only in the author's history and in the
    histories of graph-similar users. Users of the same label group share
    hashtags, interests, and mutual mentions, so similarity search finds
    same-group neighbors whose posts carry the group's keywords.
    """
    rng = Random(seed)
    filler = _filler_vocab(filler_vocab_size)
    families = keyword_families(task.label_set, per_label=12)

    users: dict[str, UserRecord] = {}
    records = []
    for i in range(n_records):
        label = task.label_set[i % len(task.label_set)]
        uid = f"{task.id}_u{i:05d}"
        group = i % len(task.label_set)
        cohort = i // len(task.label_set) // group_size

        history = tuple(
            " ".join(
                rng.choices(list(families[label]), k=2) + rng.choices(filler, k=3)
            )
            for _ in range(history_posts)
        )
        peers = [
            f"{task.id}_u{j:05d}"
            for j in range(n_records)
            if j != i
            and j % len(task.label_set) == group
            and j // len(task.label_set) // group_size == cohort
        ]
        users[uid] = UserRecord(
            user_id=uid,
            history=history,
            following=frozenset(peers[:4]),
            followers=frozenset(peers[2:6]),
            mentioned={p: 2 for p in peers[:3]},
            retweeted={p: 1 for p in peers[:2]},
            favourited={f"{task.id}_fav_{label}_{cohort}_{j}": 1 for j in range(3)},
            hashtags={f"tag_{label}_{cohort}": 3, f"tag_{label}": 2},
            interests=frozenset({f"int_{label}", f"int_{label}_{cohort}"}),
            profile_text=f"posting about {' '.join(families[label][:3])}",
        )

        ambiguous = rng.random() < ambiguous_rate
        if ambiguous:
            tokens = rng.choices(filler, k=8)
        else:
            tokens = rng.choices(list(families[label]), k=2) + rng.choices(filler, k=6)
        rng.shuffle(tokens)
        records.append(
            TweetRecord(
                tweet_id=f"{task.id}_t{i:05d}",
                task=task,
                text=" ".join(tokens),
                label=label,
                user_id=uid,
            )
        )
    return Dataset(task=task, records=tuple(records), users=users)


def history_profile_dataset(
    task: TaskId,
    planted_counts: Mapping[str, int],
    window: int,
    seed: int,
    users_per_label: int = 10,
    history_length: int | None = None,
    hateful_marker: str = "plantedhate",
    neutral_marker: str = "plantedcalm",
) -> Dataset:
    """Each label group's users carry exactly planted_counts[label] posts
    containing the hateful marker within the profiling window."""
    rng = Random(seed)
    history_length = history_length or window
    if history_length < window:
        raise ValueError("history_length must cover the window")
    for label, count in planted_counts.items():
        if count > window:
            raise ValueError(f"cannot plant {count} posts in a window of {window}")
    users: dict[str, UserRecord] = {}
    records = []
    i = 0
    for label in task.label_set:
        count = planted_counts[label]
        for _u in range(users_per_label):
            uid = f"{task.id}_u{i:05d}"
            hateful_slots = set(rng.sample(range(window), count))
            history = tuple(
                f"{hateful_marker} post {slot}" if slot in hateful_slots
                else f"{neutral_marker} post {slot}"
                for slot in range(history_length)
            )
            users[uid] = UserRecord(user_id=uid, history=history)
            records.append(
                TweetRecord(
                    tweet_id=f"{task.id}_t{i:05d}",
                    task=task,
                    text=f"target post for {label} number {i}",
                    label=label,
                    user_id=uid,
                )
            )
            i += 1
    return Dataset(task=task, records=tuple(records), users=users)


def marker_classifier(hateful_label: str, fallback_label: str, marker: str = "plantedhate"):
    """Keyword matcher usable anywhere a text -> label classifier fits."""

    def classify(text: str) -> str:
        return hateful_label if marker in text else fallback_label

    return classify


def two_task_fixture(
    seed: int,
    n_strong: int = 400,
    n_weak: int = 400,
    keywords_per_label: int = 150,
    weak_label_noise: float = 0.1,
    weak_signal_tokens: int = 1,
    weak_fillers: int = 9,
) -> dict[str, Dataset]:
    """Two tasks over one shared keyword vocabulary.

    The keyword families are wide: the strong task is clean and
    keyword-dense, so each keyword recurs enough to learn, while the weak
    task draws a single keyword per text from the same families, so most
    of its keywords are too rare to learn from the weak task alone and the
    signal is only reachable through the shared encoder.
    """
    strong_task = TaskId("strong", ("neg", "pos"))
    weak_task = TaskId("weak", ("benign", "toxic"))
    shared = keyword_families(("neg", "pos"), per_label=keywords_per_label, stem="shared")
    weak_families = {"benign": shared["neg"], "toxic": shared["pos"]}
    strong = keyword_dataset(
        KeywordTaskSpec(
            task=strong_task,
            n_records=n_strong,
            signal_tokens_per_text=3,
            filler_tokens_per_text=5,
        ),
        shared,
        seed=seed,
    )
    weak = keyword_dataset(
        KeywordTaskSpec(
            task=weak_task,
            n_records=n_weak,
            signal_tokens_per_text=weak_signal_tokens,
            filler_tokens_per_text=weak_fillers,
            label_noise=weak_label_noise,
        ),
        weak_families,
        seed=seed + 1,
    )
    return {"strong": strong, "weak": weak}


def _user_to_json(user: UserRecord) -> dict:
    def expand(counts: Mapping[str, int]) -> list[str]:
        out: list[str] = []
        for item in sorted(counts):
            out.extend([item] * counts[item])
        return out

    return {
        "user_id": user.user_id,
        "history": list(user.history),
        "following": sorted(user.following),
        "followers": sorted(user.followers),
        "mentioned": expand(user.mentioned),
        "retweeted": expand(user.retweeted),
        "favourited": expand(user.favourited),
        "hashtags": expand(user.hashtags),
        "interests": sorted(user.interests),
        "profile_text": user.profile_text,
    }


def write_workspace(
    root: str | Path,
    datasets: Mapping[str, Dataset],
    config_overrides: Mapping | None = None,
) -> Path:
    """Write corpus/user files plus a workspace config; returns the config
    path, ready for the command-line pipeline."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    tasks_cfg = []
    users: dict[str, UserRecord] = {}
    for task_id, ds in datasets.items():
        corpus_name = f"{task_id}.jsonl"
        with (root / corpus_name).open("w", encoding="utf-8") as fh:
            for r in ds.records:
                fh.write(
                    json.dumps(
                        {
                            "tweet_id": r.tweet_id,
                            "text": r.text,
                            "label": r.label,
                            "user_id": r.user_id,
                        }
                    )
                    + "\n"
                )
        users.update(ds.users)
        tasks_cfg.append(
            {"id": task_id, "labels": list(ds.task.label_set), "corpus": corpus_name}
        )
    with (root / "users.jsonl").open("w", encoding="utf-8") as fh:
        for uid in sorted(users):
            fh.write(json.dumps(_user_to_json(users[uid])) + "\n")

    config = {
        "tasks": tasks_cfg,
        "users": "users.jsonl",
        "output_dir": "out",
        "seed": 7,
        "strict": True,
    }
    if config_overrides:
        config.update(config_overrides)
    config_path = root / "workspace.json"
    config_path.write_text(json.dumps(config, indent=2), "utf-8")
    return config_path
