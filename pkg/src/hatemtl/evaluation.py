"""Classification metrics, error-case export, and user history profiling.

Zero-division convention: precision, recall, and F1 are 0 whenever their
denominator vanishes. Macro-F1 averages over the task's full declared
label set (zero-support classes included), so fold scores stay comparable
on imbalanced data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import Dataset, UserRecord

DISPLAY_DECIMALS = 6


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are gold labels, columns predicted, in label_set order."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if self.counts.shape != (n, n):
            raise ValueError("counts must be square over the label set")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(
    gold: Sequence[str], predicted: Sequence[str], label_set: Sequence[str]
) -> ConfusionMatrix:
    if len(gold) != len(predicted):
        raise ValueError(
            f"gold/predicted length mismatch: {len(gold)} vs {len(predicted)}"
        )
    index = {label: i for i, label in enumerate(label_set)}
    counts = np.zeros((len(label_set), len(label_set)), dtype=np.int64)
    for g, p in zip(gold, predicted):
        if g not in index:
            raise ValueError(f"unknown gold label {g!r}")
        if p not in index:
            raise ValueError(f"unknown predicted label {p!r}")
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(labels=tuple(label_set), counts=counts)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    labels: tuple[str, ...]
    per_class: Mapping[str, ClassMetrics]
    macro_f1: float
    weighted_f1: float

    def to_json_dict(self) -> dict:
        """Stable serialization: display fields rounded to 6 decimals,
        full-precision copies under "raw"."""
        rounded = {
            label: {
                "precision": round(m.precision, DISPLAY_DECIMALS),
                "recall": round(m.recall, DISPLAY_DECIMALS),
                "f1": round(m.f1, DISPLAY_DECIMALS),
                "support": m.support,
            }
            for label, m in self.per_class.items()
        }
        return {
            "labels": list(self.labels),
            "per_class": rounded,
            "macro_f1": round(self.macro_f1, DISPLAY_DECIMALS),
            "weighted_f1": round(self.weighted_f1, DISPLAY_DECIMALS),
            "raw": {
                "macro_f1": self.macro_f1,
                "weighted_f1": self.weighted_f1,
                "per_class_f1": {l: m.f1 for l, m in self.per_class.items()},
            },
        }


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def macro_weighted_f1(cm: ConfusionMatrix) -> MetricsReport:
    """Per-class P/R/F1 plus macro (unweighted) and weighted (by gold
    support) F1 aggregates."""
    per_class: dict[str, ClassMetrics] = {}
    f1s = []
    supports = []
    for i, label in enumerate(cm.labels):
        tp = float(cm.counts[i, i])
        pred = float(cm.counts[:, i].sum())
        gold = float(cm.counts[i, :].sum())
        precision = _safe_div(tp, pred)
        recall = _safe_div(tp, gold)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        per_class[label] = ClassMetrics(precision, recall, f1, int(gold))
        f1s.append(f1)
        supports.append(gold)
    total = sum(supports)
    weighted = (
        sum(f * s for f, s in zip(f1s, supports)) / total if total > 0 else 0.0
    )
    return MetricsReport(
        labels=cm.labels,
        per_class=per_class,
        macro_f1=float(np.mean(f1s)),
        weighted_f1=float(weighted),
    )


def score_predictions(
    gold: Sequence[str], predicted: Sequence[str], label_set: Sequence[str]
) -> MetricsReport:
    return macro_weighted_f1(confusion(gold, predicted, label_set))


@dataclass(frozen=True)
class RunAggregate:
    """Per-(run, fold) reports with mean/std of the two F1 aggregates."""

    reports: Mapping[tuple[int, int], MetricsReport]
    runs: int
    folds: int

    def __post_init__(self):
        expected = {(r, f) for r in range(self.runs) for f in range(self.folds)}
        if set(self.reports) != expected:
            raise ValueError("reports must cover runs x folds exactly")

    def _values(self, attr: str) -> np.ndarray:
        return np.array([getattr(r, attr) for r in self.reports.values()])

    @property
    def mean_macro_f1(self) -> float:
        return float(self._values("macro_f1").mean())

    @property
    def std_macro_f1(self) -> float:
        return float(self._values("macro_f1").std())

    @property
    def mean_weighted_f1(self) -> float:
        return float(self._values("weighted_f1").mean())

    @property
    def std_weighted_f1(self) -> float:
        return float(self._values("weighted_f1").std())

    def to_json_dict(self) -> dict:
        return {
            "runs": self.runs,
            "folds": self.folds,
            "mean_macro_f1": round(self.mean_macro_f1, DISPLAY_DECIMALS),
            "std_macro_f1": round(self.std_macro_f1, DISPLAY_DECIMALS),
            "mean_weighted_f1": round(self.mean_weighted_f1, DISPLAY_DECIMALS),
            "std_weighted_f1": round(self.std_weighted_f1, DISPLAY_DECIMALS),
            "raw": {
                "mean_macro_f1": self.mean_macro_f1,
                "std_macro_f1": self.std_macro_f1,
                "mean_weighted_f1": self.mean_weighted_f1,
                "std_weighted_f1": self.std_weighted_f1,
            },
            "per_run_fold": [
                {
                    "run": r,
                    "fold": f,
                    **self.reports[(r, f)].to_json_dict(),
                }
                for (r, f) in sorted(self.reports)
            ],
        }


def error_cases(
    gold: Sequence[str],
    predicted: Sequence[str],
    texts: Sequence[str],
    positive_labels: Iterable[str],
) -> tuple[list[dict], list[dict]]:
    """Split misclassifications against a positive-label set.

    False positives: gold negative, predicted positive. False negatives:
    gold positive, predicted negative. Confusions inside the positive set
    belong to neither list.
    """
    if not (len(gold) == len(predicted) == len(texts)):
        raise ValueError("gold, predicted, and texts must align")
    pos = set(positive_labels)
    fps, fns = [], []
    for g, p, t in zip(gold, predicted, texts):
        case = {"text": t, "gold": g, "predicted": p}
        if g not in pos and p in pos:
            fps.append(case)
        elif g in pos and p not in pos:
            fns.append(case)
    return fps, fns


def export_error_cases(cases: Sequence[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case, sort_keys=True) + "\n")


@dataclass(frozen=True)
class HistoryProfile:
    """Mean hateful-history counts per target-label group."""

    window: int
    group_means: Mapping[str, float]
    group_sizes: Mapping[str, int]

    def __post_init__(self):
        for g, m in self.group_means.items():
            if not 0.0 <= m <= self.window:
                raise ValueError(f"group {g!r} mean {m} outside [0, window]")

    def to_json_dict(self) -> dict:
        return {
            "window": self.window,
            "groups": {
                g: {
                    "mean_hateful_posts": round(self.group_means[g], DISPLAY_DECIMALS),
                    "users_counted": self.group_sizes[g],
                    "raw_mean": self.group_means[g],
                }
                for g in sorted(self.group_means)
            },
        }


def profile_history(
    classifier: Callable[[str], str],
    users: Mapping[str, UserRecord],
    window: int,
    hateful_labels: Iterable[str],
    target_groups: Sequence[tuple[str, str]],
) -> HistoryProfile:
    """Classify each user's `window` most recent posts and average the
    hateful counts per group.

    target_groups pairs a group label with a user_id, one entry per target
    post; users with empty histories are excluded from the means.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    hateful = set(hateful_labels)
    cache: dict[str, int] = {}
    sums: dict[str, float] = {}
    sizes: dict[str, int] = {}
    for group, user_id in target_groups:
        user = users.get(user_id)
        if user is None or not user.history:
            continue
        if user_id not in cache:
            recent = user.history[:window]
            cache[user_id] = sum(1 for post in recent if classifier(post) in hateful)
        sums[group] = sums.get(group, 0.0) + cache[user_id]
        sizes[group] = sizes.get(group, 0) + 1
    means = {g: sums[g] / sizes[g] for g in sums}
    return HistoryProfile(window=window, group_means=means, group_sizes=sizes)


def dataset_target_groups(ds: Dataset) -> list[tuple[str, str]]:
    """(label, author) pairs for every record, for history profiling."""
    return [(r.label, r.user_id) for r in ds.records]
