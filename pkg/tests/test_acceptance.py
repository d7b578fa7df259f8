"""Acceptance suite: one test per criterion, each printing a pass/fail
line with its measured quantity. Run with `pytest tests/test_acceptance.py
-v -s` to see the lines as they complete.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path
from random import Random

import numpy as np
import pytest

from hatemtl.corpus import TaskId, kfold_split, records_for
from hatemtl.encoder import (
    EncoderConfig,
    Tokenizer,
    init_params,
    loss_and_gradients,
)
from hatemtl.evaluation import (
    ConfusionMatrix,
    dataset_target_groups,
    macro_weighted_f1,
    profile_history,
    score_predictions,
)
from hatemtl.fusion import (
    BundleBuilder,
    FeatureMask,
    FusionModel,
    evaluate_fusion,
    train_fusion,
)
from hatemtl.mtl import (
    TrainingConfig,
    load_mtl_checkpoint,
    save_mtl_checkpoint,
    train_mtl,
    train_stl,
    transfer_shared,
)
from hatemtl.seeding import derive_seed
from hatemtl.synth import (
    history_profile_dataset,
    marker_classifier,
    two_task_fixture,
    user_context_dataset,
    write_workspace,
)
from hatemtl.textfeat import build_ngram_vocab, extract_ngrams, tfidf_vector
from hatemtl.usergraph import (
    SimilarityFeatures,
    similarity_features,
    top_k_similar,
    tsim_score,
)


def report(criterion: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {criterion:2d}] {status}: {detail}", flush=True)
    assert ok, f"criterion {criterion}: {detail}"


# ------------------------------------------------------------------------
# 1. metric oracle on ten fixed confusion matrices


def _hand_metrics(counts: np.ndarray):
    """Independent oracle: per-class precision/recall/F1 from raw tallies."""
    n = counts.shape[0]
    f1s, supports = [], []
    for i in range(n):
        tp = counts[i, i]
        fp = counts[:, i].sum() - tp
        fn = counts[i, :].sum() - tp
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
        supports.append(counts[i, :].sum())
    macro = sum(f1s) / n
    total = sum(supports)
    weighted = sum(f * s for f, s in zip(f1s, supports)) / total if total else 0.0
    return macro, weighted


FIXED_MATRICES = [
    [[5, 0], [0, 5]],
    [[8, 2], [0, 10]],
    [[0, 7], [3, 0]],
    [[10, 0], [10, 0]],
    [[3, 1, 0], [0, 4, 2], [1, 1, 5]],
    [[12, 0, 0], [0, 0, 0], [0, 0, 3]],
    [[1, 2, 3], [4, 5, 6], [7, 8, 9]],
    [[20, 5], [5, 70]],
    [[0, 0], [0, 0]],
    [[2, 0, 1, 0], [0, 3, 0, 1], [1, 0, 4, 0], [0, 1, 0, 5]],
]


def test_criterion_1_metric_oracle():
    start = time.monotonic()
    worst = 0.0
    for counts in FIXED_MATRICES:
        arr = np.array(counts, dtype=np.int64)
        labels = tuple(f"c{i}" for i in range(arr.shape[0]))
        rep = macro_weighted_f1(ConfusionMatrix(labels=labels, counts=arr))
        macro, weighted = _hand_metrics(arr.astype(float))
        worst = max(worst, abs(rep.macro_f1 - macro), abs(rep.weighted_f1 - weighted))
    perfect = macro_weighted_f1(
        ConfusionMatrix(labels=("a", "b"), counts=np.array([[9, 0], [0, 4]]))
    )
    elapsed = time.monotonic() - start
    ok = (
        worst < 1e-9
        and perfect.macro_f1 == 1.0
        and perfect.weighted_f1 == 1.0
        and elapsed < 1.0
    )
    report(1, ok, f"10 matrices, max deviation {worst:.2e}, {elapsed:.3f}s")


# ------------------------------------------------------------------------
# 2. gradient correctness at the reference scales


def _grad_check(kind: str, cfg: EncoderConfig, eps: float = 1e-4):
    tok = Tokenizer(
        vocab={f"w{i}": 3 + i for i in range(10)}, max_length=10
    )
    params = init_params(cfg, tok, seed=1, dtype=np.float64)
    rng = np.random.default_rng(2)
    for t in params.tensors.values():
        t += rng.normal(0.0, 0.05, t.shape)
    ids = tok.encode_batch(["w0 w1 w2", "w3 w4", "w5 w6 w7 w8 w9 w0 w1", "w2"])
    labels = np.array([0, 1, 2, 1])
    head_w = rng.normal(0.0, 0.1, (cfg.output_dim, 3))
    head_b = rng.normal(0.0, 0.1, 3)

    _loss, _lg, grads, _dw, _db = loss_and_gradients(
        ids, labels, params, cfg, head_w, head_b
    )

    def loss_with(name, index, delta):
        probe = params.copy()
        probe.tensors[name].flat[index] += delta
        l, *_ = loss_and_gradients(ids, labels, probe, cfg, head_w, head_b)
        return l

    worst = 0.0
    checked = 0
    for name, tensor in params.tensors.items():
        if tensor.size <= 64:
            coords = np.arange(tensor.size)
        else:
            coords = rng.choice(tensor.size, size=24, replace=False)
        for index in coords:
            numeric = (
                loss_with(name, index, eps) - loss_with(name, index, -eps)
            ) / (2 * eps)
            analytic = grads[name].flat[index]
            rel = abs(numeric - analytic) / max(abs(numeric) + abs(analytic), 1e-4)
            worst = max(worst, rel)
            checked += 1
    return worst, checked


def test_criterion_2_gradient_correctness():
    start = time.monotonic()
    configs = {
        "transformer": EncoderConfig(
            kind="transformer", embedding_dim=64, output_dim=64, layers=2, heads=2
        ),
        "cnn": EncoderConfig(
            kind="cnn", embedding_dim=64, output_dim=64,
            num_filters=100, kernel_widths=(1, 2, 3, 4),
        ),
        "gru": EncoderConfig(
            kind="gru", embedding_dim=64, output_dim=64, hidden_nodes=100
        ),
    }
    details = []
    ok = True
    for kind, cfg in configs.items():
        worst, checked = _grad_check(kind, cfg)
        details.append(f"{kind}: rel err {worst:.2e} over {checked} coords")
        ok = ok and worst < 1e-3
    elapsed = time.monotonic() - start
    ok = ok and elapsed < 120.0
    report(2, ok, "; ".join(details) + f"; {elapsed:.1f}s")


# ------------------------------------------------------------------------
# 3. tf-idf equals a direct recomputation on a 100-document corpus


def test_criterion_3_tfidf_brute_force():
    rng = Random(7)
    words = [f"term{i:02d}" for i in range(40)]
    docs = [rng.choices(words, k=rng.randint(2, 12)) for _ in range(100)]
    vocab = build_ngram_vocab(docs, max_features=600)
    worst = 0.0
    for doc in docs:
        produced = tfidf_vector(doc, vocab).toarray()
        raw = np.zeros(len(vocab))
        seen: dict[str, int] = {}
        for gram in extract_ngrams(doc):
            seen[gram] = seen.get(gram, 0) + 1
        for gram, tf in seen.items():
            if gram in vocab.grams:
                idf = (
                    math.log(
                        (1 + vocab.corpus_size)
                        / (1 + vocab.document_frequency[gram])
                    )
                    + 1.0
                )
                raw[vocab.grams[gram]] = tf * idf
        norm = np.linalg.norm(raw)
        expected = raw / norm if norm > 0 else raw
        worst = max(worst, float(np.abs(produced - expected).max()))
    report(3, worst < 1e-9, f"100 documents, max |diff| {worst:.2e}")


# ------------------------------------------------------------------------
# 4. splitter invariants over 50 random datasets


def test_criterion_4_splitter_invariants():
    from tests.conftest import make_dataset

    rng = Random(13)
    failures = []
    for trial in range(50):
        size = rng.randint(25, 500)
        n_labels = rng.randint(2, 4)
        labels = tuple(f"l{i}" for i in range(n_labels))
        task = TaskId(f"t{trial}", labels)
        rows = [
            (f"id{i}", f"text {i}", labels[rng.randrange(n_labels)], f"u{i}")
            for i in range(size)
        ]
        ds = make_dataset(task, rows)
        seed = rng.randint(0, 10_000)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            folds = kfold_split(ds, k=5, val_fraction=0.15, seed=seed)
            again = kfold_split(ds, k=5, val_fraction=0.15, seed=seed)
        if folds != again:
            failures.append(f"trial {trial}: not deterministic")
            continue
        all_ids = {r.tweet_id for r in ds.records}
        test_union = set()
        for f in folds:
            if f.train_ids & f.val_ids or f.train_ids & f.test_ids or f.val_ids & f.test_ids:
                failures.append(f"trial {trial}: overlap in fold {f.fold_index}")
            if f.train_ids | f.val_ids | f.test_ids != all_ids:
                failures.append(f"trial {trial}: fold {f.fold_index} not exhaustive")
            pool = len(f.train_ids) + len(f.val_ids)
            if abs(len(f.val_ids) - 0.15 * pool) > 1.0:
                failures.append(
                    f"trial {trial}: val ratio off by "
                    f"{abs(len(f.val_ids) - 0.15 * pool):.2f} records"
                )
            if test_union & f.test_ids:
                failures.append(f"trial {trial}: record in two test folds")
            test_union |= f.test_ids
        if test_union != all_ids:
            failures.append(f"trial {trial}: test folds miss records")
    report(4, not failures, f"50 datasets checked; {failures[:3] or 'no violations'}")


# ------------------------------------------------------------------------
# 5. transfer fidelity, including a checkpoint round trip


ENC32 = EncoderConfig(
    kind="transformer", embedding_dim=32, output_dim=32, layers=1, heads=2, hidden_dim=64
)


def test_criterion_5_transfer_fidelity(tmp_path):
    data = two_task_fixture(seed=55, n_strong=120, n_weak=120)
    splits = {
        tid: kfold_split(ds, 5, 0.15, seed=derive_seed(1, "split", tid))[0]
        for tid, ds in data.items()
    }
    model, _ = train_mtl(
        {tid: (data[tid], splits[tid]) for tid in data},
        ENC32,
        TrainingConfig(learning_rate=3e-3, batch_size=32, epochs=2, seed=0),
        max_length=20,
    )
    texts = [r.text for r in data["weak"].records[:40]]
    source = model.text_encoder.encode_batch(texts)

    shared = transfer_shared(model)
    transferred = shared.encode_batch(texts)
    bit_identical = np.array_equal(source, transferred)

    path = tmp_path / "mtl.ckpt"
    save_mtl_checkpoint(model, path)
    reloaded = transfer_shared(load_mtl_checkpoint(path))
    round_trip = np.array_equal(source, reloaded.encode_batch(texts))

    shared.params.tensors["embedding"][...] = 0.0
    unaffected = np.array_equal(source, model.text_encoder.encode_batch(texts))
    ok = bit_identical and round_trip and unaffected
    report(
        5,
        ok,
        f"transfer bit-identical={bit_identical}, checkpoint round trip={round_trip}, "
        f"mutation isolated={unaffected}",
    )


# ------------------------------------------------------------------------
# 6. directional multi-task gain on the shared-vocabulary fixture


def test_criterion_6_directional_mtl_gain():
    start = time.monotonic()
    n = 588  # 5-fold split with 15% validation leaves 400 training records
    results = []
    for seed in range(5):
        data = two_task_fixture(seed=100, n_strong=n, n_weak=n)
        splits = {
            tid: kfold_split(ds, 5, 0.15, seed=derive_seed(0, "split", tid))[0]
            for tid, ds in data.items()
        }
        tcfg = TrainingConfig(learning_rate=3e-3, batch_size=32, epochs=6, seed=seed)
        ds, split = data["weak"], splits["weak"]
        assert abs(len(split.train_ids) - 400) <= 1
        stl_model, _ = train_stl(ds, split, ENC32, tcfg, max_length=20)
        test = records_for(ds, split.test_ids)
        gold = [r.label for r in test]
        stl_f1 = score_predictions(
            gold, stl_model.predict([r.text for r in test]), ds.task.label_set
        ).macro_f1
        mtl_model, _ = train_mtl(
            {tid: (data[tid], splits[tid]) for tid in data}, ENC32, tcfg, max_length=20
        )
        mtl_f1 = score_predictions(
            gold, mtl_model.predict("weak", [r.text for r in test]), ds.task.label_set
        ).macro_f1
        results.append((stl_f1, mtl_f1))
    mean_stl = float(np.mean([a for a, _ in results]))
    mean_mtl = float(np.mean([b for _, b in results]))
    wins = sum(1 for a, b in results if b >= a + 0.02)
    elapsed = time.monotonic() - start
    ok = mean_mtl >= mean_stl - 0.01 and wins >= 3 and elapsed < 600.0
    report(
        6,
        ok,
        f"mean stl={mean_stl:.3f} mtl={mean_mtl:.3f} "
        f"(gain {mean_mtl - mean_stl:+.3f}), wins at +0.02: {wins}/5, {elapsed:.0f}s",
    )


# ------------------------------------------------------------------------
# 7. directional fusion gain when signal hides in user context


def test_criterion_7_directional_fusion_gain():
    start = time.monotonic()
    task = TaskId("usr", ("calm", "angry"))
    gains = []
    for seed in range(5):
        ds = user_context_dataset(task, 240, seed=900 + seed, ambiguous_rate=0.3)
        companion = two_task_fixture(seed=300, n_strong=240, n_weak=240)["strong"]
        splits = {
            "usr": kfold_split(ds, 5, 0.15, seed=derive_seed(2, "usr"))[0],
            "strong": kfold_split(companion, 5, 0.15, seed=derive_seed(2, "strong"))[0],
        }
        tcfg = TrainingConfig(learning_rate=3e-3, batch_size=32, epochs=5, seed=seed)
        model, _ = train_mtl(
            {"usr": (ds, splits["usr"]), "strong": (companion, splits["strong"])},
            ENC32,
            tcfg,
            max_length=20,
        )
        shared = transfer_shared(model)
        bundles = BundleBuilder.for_dataset(ds, shared, max_features=2000).build(ds)
        labels = {r.tweet_id: r.label for r in ds.records}
        split = splits["usr"]
        full = train_fusion(
            bundles, labels, task, sorted(split.train_ids), tcfg, mask=FeatureMask.all()
        )
        full_f1 = evaluate_fusion(
            full, bundles, labels, sorted(split.test_ids), task.label_set
        ).macro_f1
        text_only = FusionModel.from_task_head(model.heads["usr"])
        text_f1 = evaluate_fusion(
            text_only, bundles, labels, sorted(split.test_ids), task.label_set
        ).macro_f1
        gains.append(full_f1 - text_f1)
    mean_gain = float(np.mean(gains))
    elapsed = time.monotonic() - start
    ok = mean_gain >= 0.02 and elapsed < 600.0
    report(
        7,
        ok,
        f"mean full-mask gain over text-only {mean_gain:+.3f} "
        f"(per-seed {' '.join(f'{g:+.3f}' for g in gains)}), {elapsed:.0f}s",
    )


# ------------------------------------------------------------------------
# 8. masks-off fusion reduces to the plain task head


def test_criterion_8_fusion_reduction():
    data = two_task_fixture(seed=77, n_strong=120, n_weak=120)
    splits = {
        tid: kfold_split(ds, 5, 0.15, seed=derive_seed(4, tid))[0]
        for tid, ds in data.items()
    }
    model, _ = train_mtl(
        {tid: (data[tid], splits[tid]) for tid in data},
        ENC32,
        TrainingConfig(learning_rate=3e-3, batch_size=32, epochs=2, seed=1),
        max_length=20,
    )
    ds, split = data["weak"], splits["weak"]
    shared = transfer_shared(model)
    bundles = BundleBuilder.for_dataset(ds, shared, max_features=500).build(ds)
    labels = {r.tweet_id: r.label for r in ds.records}
    reduction = FusionModel.from_task_head(model.heads["weak"])
    fused = evaluate_fusion(
        reduction, bundles, labels, sorted(split.test_ids), ds.task.label_set
    )
    test = records_for(ds, split.test_ids)
    head = score_predictions(
        [r.label for r in test],
        model.predict("weak", [r.text for r in test]),
        ds.task.label_set,
    )
    diff = max(
        abs(fused.macro_f1 - head.macro_f1), abs(fused.weighted_f1 - head.weighted_f1)
    )
    report(8, diff < 1e-6, f"masks-off vs head metric difference {diff:.2e}")


# ------------------------------------------------------------------------
# 9. similarity properties and exhaustive top-k agreement


def _random_user(rng: Random, uid: str, names: list[str]):
    from hatemtl.corpus import UserRecord

    others = [n for n in names if n != uid]
    return UserRecord(
        user_id=uid,
        following=frozenset(rng.sample(others, rng.randint(0, min(4, len(others))))),
        followers=frozenset(rng.sample(others, rng.randint(0, min(4, len(others))))),
        mentioned={x: rng.randint(1, 3) for x in rng.sample(others, rng.randint(0, min(3, len(others))))},
        retweeted={x: rng.randint(1, 2) for x in rng.sample(others, rng.randint(0, min(2, len(others))))},
        favourited={f"t{rng.randint(0, 30)}": 1 for _ in range(rng.randint(0, 5))},
        hashtags={f"h{rng.randint(0, 10)}": rng.randint(1, 3) for _ in range(rng.randint(0, 5))},
        interests=frozenset(f"i{rng.randint(0, 8)}" for _ in range(rng.randint(0, 4))),
        profile_text=" ".join(rng.sample(
            ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"], rng.randint(0, 5)
        )),
    )


def test_criterion_9_similarity_properties():
    rng = Random(17)
    issues = []
    pools_checked = 0
    for pool_index in range(200):
        size = rng.randint(2, 10)
        names = [f"p{pool_index}_u{i}" for i in range(size)]
        pool = [_random_user(rng, uid, names) for uid in names]
        target = pool[rng.randrange(size)]
        k = rng.randint(1, 4)
        selection = top_k_similar(target, pool, k=k)
        brute = []
        for other in pool:
            if other.user_id == target.user_id:
                continue
            f_uv = similarity_features(target, other)
            f_vu = similarity_features(other, target)
            arr = f_uv.as_array()
            if not np.allclose(arr, f_vu.as_array(), atol=1e-12):
                issues.append(f"pool {pool_index}: asymmetric features")
            if arr.min() < 0.0 or arr.max() > 1.0:
                issues.append(f"pool {pool_index}: component out of bounds")
            score = tsim_score(f_uv)
            if not 0.0 <= score.value <= 1.0:
                issues.append(f"pool {pool_index}: score out of bounds")
            brute.append((other.user_id, score.value))
        brute.sort(key=lambda it: (-it[1], it[0]))
        got = [(uid, s.value) for uid, s in selection.neighbors]
        if [(u, round(v, 12)) for u, v in brute[:k]] != [
            (u, round(v, 12)) for u, v in got
        ]:
            issues.append(f"pool {pool_index}: ranking mismatch")
        pools_checked += 1

    base = SimilarityFeatures(*([0.3] * 7))
    for i in range(7):
        vals = [0.3] * 7
        vals[i] = 0.9
        if tsim_score(SimilarityFeatures(*vals)).value < tsim_score(base).value:
            issues.append(f"component {i}: not monotone")
    report(
        9,
        not issues,
        f"{pools_checked} pools, brute-force ranking agreement; "
        f"{issues[:3] or 'no violations'}",
    )


# ------------------------------------------------------------------------
# 10. history profiling recovers planted counts exactly


def test_criterion_10_history_profiling():
    task = TaskId("prof", ("hateful", "spam", "neutral"))
    planted = {"hateful": 7, "spam": 3, "neutral": 2}
    ds = history_profile_dataset(
        task, planted, window=50, seed=23, users_per_label=12, history_length=80
    )
    classifier = marker_classifier("hateful", "neutral")
    profile = profile_history(
        classifier,
        ds.users,
        window=50,
        hateful_labels={"hateful"},
        target_groups=dataset_target_groups(ds),
    )
    deviations = {
        label: abs(profile.group_means[label] - planted[label]) for label in planted
    }
    ok = all(d == 0.0 for d in deviations.values())
    report(
        10,
        ok,
        "planted means recovered exactly: "
        + ", ".join(f"{l}={profile.group_means[l]:.1f}" for l in planted),
    )


# ------------------------------------------------------------------------
# 11. end-to-end command pipeline on the bundled fixture workspace


def _schema_valid_aggregate(path: Path) -> bool:
    obj = json.loads(path.read_text("utf-8"))
    return (
        {"runs", "folds", "mean_macro_f1", "mean_weighted_f1", "raw", "per_run_fold"}
        <= set(obj)
        and len(obj["per_run_fold"]) == obj["runs"] * obj["folds"]
    )


def test_criterion_11_end_to_end_smoke(tmp_path):
    start = time.monotonic()
    task = TaskId("usr", ("calm", "angry"))
    usr = user_context_dataset(task, 160, seed=31)
    strong = two_task_fixture(seed=32, n_strong=160, n_weak=160)["strong"]
    config_path = write_workspace(
        tmp_path,
        {"usr": usr, "strong": strong},
        {
            "seed": 11,
            "encoder": {
                "kind": "transformer", "embedding_dim": 32, "output_dim": 32,
                "layers": 1, "heads": 2, "hidden_dim": 64,
            },
            "training": {"learning_rate": 3e-3, "batch_size": 32, "epochs": 3, "runs": 2},
            "tokenizer": {"max_vocab": 4000, "max_length": 20},
            "features": {"max_features": 2000, "history_window": 6},
            "evaluation": {"folds": 2, "val_fraction": 0.15},
        },
    )

    def run(*argv):
        proc = subprocess.run(
            [sys.executable, "-m", "hatemtl.cli", "--config", str(config_path), *argv],
            capture_output=True,
            text=True,
            timeout=600,
        )
        assert proc.returncode == 0, (
            f"{argv} exited {proc.returncode}\nstdout: {proc.stdout[-2000:]}"
            f"\nstderr: {proc.stderr[-2000:]}"
        )

    run("ingest")
    run("train", "--mode", "mtl")
    run("fuse", "--features", "all")
    run("evaluate", "--pipeline", "mtl", "--runs", "2")
    run("report")

    from hatemtl.config import load_workspace_config

    config = load_workspace_config(config_path)
    tag = config.config_hash()[:12]
    out = config.output_dir
    ingest_report = json.loads((out / f"ingest-{tag}" / "ingest_report.json").read_text())
    aggregate_path = out / f"evaluate-{tag}" / "aggregate_mtl_usr.json"
    summary = json.loads((out / f"report-{tag}" / "summary.json").read_text())
    fusion_metrics = out / f"fuse-{tag}" / "metrics_usr_intra+inter+tb.json"

    elapsed = time.monotonic() - start
    ok = (
        set(ingest_report) == {"usr", "strong"}
        and _schema_valid_aggregate(aggregate_path)
        and fusion_metrics.exists()
        and summary["count"] >= 3
        and elapsed < 900.0
    )
    report(
        11,
        ok,
        f"ingest/train/fuse/evaluate/report all exit 0, "
        f"{summary['count']} reports merged, {elapsed:.0f}s",
    )
