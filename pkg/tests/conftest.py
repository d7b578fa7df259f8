import pytest

from hatemtl.corpus import Dataset, TaskId, TweetRecord, UserRecord
from hatemtl.textfeat import SentimentLexicon


@pytest.fixture
def toy_lexicon() -> SentimentLexicon:
    return SentimentLexicon(
        valence={"great": 3.0, "good": 1.5, "bad": -1.5, "awful": -3.0, "meh": 0.0},
        negators=frozenset({"not", "never"}),
    )


def make_dataset(task: TaskId, rows, users=None) -> Dataset:
    """rows: (tweet_id, text, label, user_id) tuples."""
    records = tuple(
        TweetRecord(tweet_id=t, task=task, text=x, label=l, user_id=u)
        for t, x, l, u in rows
    )
    user_map = dict(users or {})
    for r in records:
        user_map.setdefault(r.user_id, UserRecord(r.user_id))
    return Dataset(task=task, records=records, users=user_map)


@pytest.fixture
def two_label_task() -> TaskId:
    return TaskId("demo", ("hateful", "neutral"))
