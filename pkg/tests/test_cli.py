import json
from pathlib import Path

import pytest

from hatemtl.cli import main
from hatemtl.config import load_workspace_config
from hatemtl.corpus import TaskId
from hatemtl.synth import two_task_fixture, user_context_dataset, write_workspace


@pytest.fixture
def workspace(tmp_path) -> Path:
    data = two_task_fixture(seed=21, n_strong=60, n_weak=60)
    usr = user_context_dataset(TaskId("usr", ("calm", "angry")), 36, seed=22)
    datasets = {"strong": data["strong"], "weak": data["weak"], "usr": usr}
    return write_workspace(
        tmp_path,
        datasets,
        {
            "seed": 5,
            "encoder": {
                "kind": "transformer", "embedding_dim": 16, "output_dim": 16,
                "layers": 1, "heads": 2, "hidden_dim": 32,
            },
            "training": {"learning_rate": 3e-3, "batch_size": 16, "epochs": 1, "runs": 2},
            "tokenizer": {"max_vocab": 500, "max_length": 12},
            "features": {"max_features": 300, "history_window": 5},
            "evaluation": {"folds": 2, "val_fraction": 0.15},
        },
    )


def run_cli(*argv) -> int:
    return main(list(argv))


def _run_dir(config_path: Path, command: str) -> Path:
    config = load_workspace_config(config_path)
    return config.output_dir / f"{command}-{config.config_hash()[:12]}"


def test_ingest_ok_and_report(workspace, capsys):
    assert run_cli("--config", str(workspace), "ingest") == 0
    out = capsys.readouterr().out
    assert "strong" in out and "records" in out
    report = json.loads((_run_dir(workspace, "ingest") / "ingest_report.json").read_text())
    assert report["usr"]["class_distribution"].keys() == {"calm", "angry"}
    total = sum(report["usr"]["class_distribution"].values())
    assert total == report["usr"]["records"]


def test_ingest_missing_users_file_exit_2(workspace, capsys):
    cfg = json.loads(workspace.read_text())
    cfg["users"] = "missing_users.jsonl"
    workspace.write_text(json.dumps(cfg))
    assert run_cli("--config", str(workspace), "ingest") == 2
    assert "missing_users.jsonl" in capsys.readouterr().err


def test_ingest_schema_violation_strict_vs_lenient(workspace, capsys):
    config = load_workspace_config(workspace)
    corpus_path = config.tasks[0].corpus_path
    with corpus_path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps({"tweet_id": "zz", "text": "x", "label": "bogus",
                             "user_id": "u"}) + "\n")
    assert run_cli("--config", str(workspace), "ingest") == 2
    assert run_cli("--config", str(workspace), "--lenient", "ingest") == 0
    assert "bogus" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert run_cli("--config", str(tmp_path / "nope.json"), "ingest") == 2


def test_split_writes_fold_files(workspace):
    assert run_cli("--config", str(workspace), "split") == 0
    split_dir = _run_dir(workspace, "split")
    lines = (split_dir / "splits_strong.jsonl").read_text().splitlines()
    assert len(lines) == 2
    first = json.loads(lines[0])
    assert set(first) == {"fold", "train", "val", "test"}
    manifest = json.loads((split_dir / "manifest.json").read_text())
    assert "splits_strong.jsonl" in manifest["outputs"]


def test_train_stl_writes_checkpoints(workspace):
    assert run_cli("--config", str(workspace), "train", "--mode", "stl") == 0
    run_dir = _run_dir(workspace, "train")
    assert (run_dir / "stl_strong.ckpt").exists()
    assert (run_dir / "stl_usr.ckpt").exists()
    assert (run_dir / "events_stl.jsonl").exists()


def test_train_mtl_checkpoint_heads(workspace):
    assert run_cli("--config", str(workspace), "train", "--mode", "mtl") == 0
    run_dir = _run_dir(workspace, "train")
    from hatemtl.mtl import load_mtl_checkpoint

    model = load_mtl_checkpoint(run_dir / "mtl.ckpt")
    assert set(model.heads) == {"strong", "weak", "usr"}


def test_train_event_log_deterministic(workspace):
    assert run_cli("--config", str(workspace), "train", "--mode", "mtl") == 0
    log_path = _run_dir(workspace, "train") / "events_mtl.jsonl"
    first = log_path.read_bytes()
    assert run_cli("--config", str(workspace), "train", "--mode", "mtl") == 0
    assert log_path.read_bytes() == first


def test_fuse_requires_checkpoint(workspace, capsys):
    assert run_cli("--config", str(workspace), "fuse") == 2
    assert "train" in capsys.readouterr().err


def test_fuse_masks_and_reduction(workspace, capsys):
    assert run_cli("--config", str(workspace), "train", "--mode", "mtl") == 0
    code = run_cli(
        "--config", str(workspace), "fuse",
        "--features", "none", "--features", "intra",
        "--features", "inter", "--features", "intra,inter,tb",
    )
    assert code == 0
    run_dir = _run_dir(workspace, "fuse")
    for tag in ("none", "intra", "inter", "intra+inter+tb"):
        assert (run_dir / f"metrics_usr_{tag}.json").exists()
    assert (run_dir / "bundles_usr.ckpt").exists()

    # reduction case: mask none equals the mtl head evaluation
    from hatemtl.corpus import kfold_split, records_for, load_corpus, load_users
    from hatemtl.evaluation import score_predictions
    from hatemtl.mtl import load_mtl_checkpoint
    from hatemtl.seeding import derive_seed

    config = load_workspace_config(workspace)
    users = load_users(config.users_path)
    spec = config.task_by_id("usr")
    ds = load_corpus(spec.corpus_path, spec.task, users)
    split = kfold_split(ds, 2, 0.15, derive_seed(config.seed, "split", "usr"))[0]
    model = load_mtl_checkpoint(_run_dir(workspace, "train") / "mtl.ckpt")
    test = records_for(ds, split.test_ids)
    head_report = score_predictions(
        [r.label for r in test],
        model.predict("usr", [r.text for r in test]),
        ds.task.label_set,
    )
    fused = json.loads((run_dir / "metrics_usr_none.json").read_text())
    assert abs(fused["raw"]["macro_f1"] - head_report.macro_f1) < 1e-6


def test_evaluate_writes_aggregates_and_errors(workspace):
    code = run_cli(
        "--config", str(workspace), "evaluate", "--pipeline", "stl", "--runs", "1"
    )
    assert code == 0
    run_dir = _run_dir(workspace, "evaluate")
    agg = json.loads((run_dir / "aggregate_stl_strong.json").read_text())
    assert agg["runs"] == 1 and agg["folds"] == 2
    assert (run_dir / "false_positives_stl_strong.jsonl").exists()


def test_profile_planted_window(workspace):
    assert run_cli("--config", str(workspace), "train", "--mode", "mtl") == 0
    assert run_cli("--config", str(workspace), "profile", "--window", "3") == 0
    run_dir = _run_dir(workspace, "profile")
    profile = json.loads((run_dir / "history_profile_usr.json").read_text())
    assert profile["window"] == 3
    assert set(profile["groups"]) <= {"calm", "angry"}


def test_report_merges_everything(workspace):
    assert run_cli("--config", str(workspace), "ingest") == 0
    assert run_cli("--config", str(workspace), "train", "--mode", "mtl") == 0
    assert run_cli("--config", str(workspace), "fuse", "--features", "none") == 0
    assert run_cli("--config", str(workspace), "report") == 0
    summary = json.loads((_run_dir(workspace, "report") / "summary.json").read_text())
    assert summary["count"] == len(summary["reports"]) >= 2


def test_seed_flag_changes_run_dir(workspace):
    c1 = load_workspace_config(workspace)
    c2 = load_workspace_config(workspace, {"seed": 99})
    assert c1.config_hash() != c2.config_hash()


def test_config_hash_stable_under_reordering(tmp_path, workspace):
    cfg = json.loads(workspace.read_text())
    reordered = dict(reversed(list(cfg.items())))
    other = tmp_path / "reordered.json"
    other.write_text(json.dumps(reordered))
    a = load_workspace_config(workspace)
    b = load_workspace_config(other)
    assert a.config_hash() == b.config_hash()
