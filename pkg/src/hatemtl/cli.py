"""Batch command-line surface.

Subcommands: ingest, split, train, fuse, evaluate, profile, report. One
workspace config file drives everything; flags override config fields.
Exit codes: 0 success, 1 runtime failure, 2 configuration or validation
failure. Outputs land under <output_dir>/<command>-<config-hash>/ so
reruns with an unchanged config overwrite deterministically.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fusion as fusion_mod
from . import protocol
from .checkpoint import CheckpointError
from .config import (
    ConfigError,
    WorkspaceConfig,
    check_input_paths,
    load_workspace_config,
    run_directory,
    write_manifest,
)
from .corpus import (
    CorpusError,
    Dataset,
    class_distribution,
    kfold_split,
    load_corpus,
    load_users,
    records_for,
)
from .evaluation import (
    dataset_target_groups,
    error_cases,
    export_error_cases,
    profile_history,
)
from .fusion import BundleBuilder, FeatureMask, FusionModel, load_bundles, save_bundles
from .mtl import (
    load_mtl_checkpoint,
    save_mtl_checkpoint,
    save_stl_checkpoint,
    train_mtl,
    train_stl,
    transfer_shared,
    write_events,
)
from .protocol import PipelineSpec, cross_validate
from .seeding import derive_seed
from .textfeat import SentimentLexicon


def _load_datasets(config: WorkspaceConfig) -> dict[str, Dataset]:
    check_input_paths(config)
    users = load_users(config.users_path, config.strict) if config.users_path else {}
    datasets = {}
    for spec in config.tasks:
        issues: list = []
        ds = load_corpus(spec.corpus_path, spec.task, users, config.strict, issues)
        for issue in issues:
            print(f"warning: {issue}", file=sys.stderr)
        datasets[spec.task.id] = ds
    return datasets


def _lexicon(config: WorkspaceConfig) -> SentimentLexicon:
    if config.features.lexicon:
        return SentimentLexicon.from_file(config.root / config.features.lexicon)
    return SentimentLexicon.default()


def _splits(config: WorkspaceConfig, datasets: dict[str, Dataset]):
    return {
        task_id: kfold_split(
            ds,
            config.evaluation.folds,
            config.evaluation.val_fraction,
            derive_seed(config.seed, "split", task_id),
        )
        for task_id, ds in datasets.items()
    }


def cmd_ingest(config: WorkspaceConfig, args: argparse.Namespace) -> int:
    datasets = _load_datasets(config)
    run_dir = run_directory(config, "ingest")
    report = {}
    for task_id, ds in datasets.items():
        dist = class_distribution(ds)
        report[task_id] = {
            "records": len(ds),
            "users": len(ds.users),
            "class_distribution": dist,
        }
        print(f"task {task_id}: {len(ds)} records, {len(ds.users)} users")
        for label, count in dist.items():
            print(f"  {label:>12}: {count}")
    out = run_dir / "ingest_report.json"
    out.write_text(json.dumps(report, indent=2, sort_keys=True), "utf-8")
    write_manifest(run_dir, "ingest", config, [out])
    print(f"wrote {out}")
    return 0


def cmd_split(config: WorkspaceConfig, args: argparse.Namespace) -> int:
    datasets = _load_datasets(config)
    run_dir = run_directory(config, "split")
    outputs = []
    for task_id, folds in _splits(config, datasets).items():
        out = run_dir / f"splits_{task_id}.jsonl"
        with out.open("w", encoding="utf-8") as fh:
            for fold in folds:
                fh.write(
                    json.dumps(
                        {
                            "fold": fold.fold_index,
                            "train": sorted(fold.train_ids),
                            "val": sorted(fold.val_ids),
                            "test": sorted(fold.test_ids),
                        }
                    )
                    + "\n"
                )
        outputs.append(out)
        print(f"task {task_id}: wrote {len(folds)} folds to {out}")
    write_manifest(run_dir, "split", config, outputs)
    return 0


def _train_checkpoint_path(config: WorkspaceConfig) -> Path:
    return run_directory(config, "train") / "mtl.ckpt"


def cmd_train(config: WorkspaceConfig, args: argparse.Namespace) -> int:
    datasets = _load_datasets(config)
    splits = _splits(config, datasets)
    fold = args.fold
    run_dir = run_directory(config, "train")
    events: list[dict] = []
    outputs = []
    encoder_config = config.encoder
    tcfg = config.training

    if args.mode == "stl":
        for task_id, ds in datasets.items():
            model, _hist = train_stl(
                ds,
                splits[task_id][fold],
                encoder_config,
                tcfg,
                max_vocab=config.tokenizer.max_vocab,
                max_length=config.tokenizer.max_length,
                fold=fold,
                events=events,
            )
            out = run_dir / f"stl_{task_id}.ckpt"
            save_stl_checkpoint(model, out, seed=config.seed)
            outputs.append(out)
            print(f"trained stl model for task {task_id} -> {out}")
    else:
        if len(datasets) < 2:
            raise ConfigError("mtl training requires at least two configured tasks")
        joint = {tid: (datasets[tid], splits[tid][fold]) for tid in datasets}
        model, _hist = train_mtl(
            joint,
            encoder_config,
            tcfg,
            max_vocab=config.tokenizer.max_vocab,
            max_length=config.tokenizer.max_length,
            fold=fold,
            events=events,
        )
        out = _train_checkpoint_path(config)
        save_mtl_checkpoint(model, out, seed=config.seed)
        outputs.append(out)
        print(f"trained mtl model over {sorted(datasets)} -> {out}")

    log_path = run_dir / f"events_{args.mode}.jsonl"
    write_events(events, log_path)
    outputs.append(log_path)
    write_manifest(run_dir, "train", config, outputs)
    return 0


def _parse_masks(values: list[str] | None) -> list[FeatureMask]:
    if not values:
        return [FeatureMask.all()]
    masks = []
    for value in values:
        if value == "all":
            masks.append(FeatureMask.all())
        elif value == "none":
            masks.append(FeatureMask.none())
        else:
            masks.append(FeatureMask.from_names([v for v in value.split(",") if v]))
    return masks


def _mask_tag(mask: FeatureMask) -> str:
    return "+".join(mask.names()) if mask.names() else "none"


def cmd_fuse(config: WorkspaceConfig, args: argparse.Namespace) -> int:
    ckpt_path = _train_checkpoint_path(config)
    if not ckpt_path.exists():
        raise ConfigError(
            f"no mtl checkpoint at {ckpt_path}; run the train command first"
        )
    model = load_mtl_checkpoint(ckpt_path)
    datasets = _load_datasets(config)
    splits = _splits(config, datasets)
    shared = transfer_shared(model)
    lexicon = _lexicon(config)
    masks = _parse_masks(args.features)
    run_dir = run_directory(config, "fuse")
    outputs = []
    feats = config.features

    for task_id, ds in datasets.items():
        if task_id not in model.heads:
            raise ConfigError(f"checkpoint has no head for task {task_id!r}")
        cache_path = run_dir / f"bundles_{task_id}.ckpt"
        if cache_path.exists():
            bundles = load_bundles(cache_path)
        else:
            builder = BundleBuilder.for_dataset(
                ds,
                shared,
                lexicon=lexicon,
                max_features=feats.max_features,
                neighbors=feats.neighbors,
                tweets_per_neighbor=feats.tweets_per_neighbor,
                history_cap=feats.history_cap,
                history_batch=feats.history_batch,
            )
            bundles = builder.build(ds)
            save_bundles(bundles, cache_path)
        outputs.append(cache_path)

        labels = {r.tweet_id: r.label for r in ds.records}
        split = splits[task_id][args.fold]
        for mask in masks:
            tag = _mask_tag(mask)
            if mask.names():
                fm = fusion_mod.train_fusion(
                    bundles,
                    labels,
                    ds.task,
                    sorted(split.train_ids),
                    config.training,
                    mask=mask,
                    tb_projection_dim=feats.tb_projection_dim,
                )
            else:
                fm = FusionModel.from_task_head(model.heads[task_id])
            report = fusion_mod.evaluate_fusion(
                fm, bundles, labels, sorted(split.test_ids), ds.task.label_set
            )
            ckpt_out = run_dir / f"fusion_{task_id}_{tag}.ckpt"
            fusion_mod.save_fusion_checkpoint(fm, ckpt_out)
            metrics_out = run_dir / f"metrics_{task_id}_{tag}.json"
            metrics_out.write_text(
                json.dumps(report.to_json_dict(), indent=2), "utf-8"
            )
            outputs.extend([ckpt_out, metrics_out])
            print(
                f"fusion[{tag}] task {task_id}: macro_f1={report.macro_f1:.4f} "
                f"weighted_f1={report.weighted_f1:.4f}"
            )
    write_manifest(run_dir, "fuse", config, outputs)
    return 0


def cmd_evaluate(config: WorkspaceConfig, args: argparse.Namespace) -> int:
    datasets = _load_datasets(config)
    mask = _parse_masks(args.features)[0]
    spec = PipelineSpec(
        mode=args.pipeline,
        encoder_config=config.encoder,
        training_config=config.training,
        feature_mask=mask,
        tb_projection_dim=config.features.tb_projection_dim,
        max_vocab=config.tokenizer.max_vocab,
        max_length=config.tokenizer.max_length,
        neighbors=config.features.neighbors,
        tweets_per_neighbor=config.features.tweets_per_neighbor,
        history_cap=config.features.history_cap,
        history_batch=config.features.history_batch,
        max_features=config.features.max_features,
    )
    runs = args.runs if args.runs is not None else config.training.runs
    run_dir = run_directory(config, "evaluate")
    predictions: list = []
    aggregates = cross_validate(
        spec,
        datasets,
        k=config.evaluation.folds,
        runs=runs,
        seed=config.seed,
        val_fraction=config.evaluation.val_fraction,
        parallel_folds=args.parallel_folds,
        prediction_sink=predictions,
    )
    outputs = []
    for task_id, agg in aggregates.items():
        out = run_dir / f"aggregate_{args.pipeline}_{task_id}.json"
        out.write_text(json.dumps(agg.to_json_dict(), indent=2), "utf-8")
        outputs.append(out)
        print(
            f"{args.pipeline} task {task_id}: macro_f1={agg.mean_macro_f1:.4f}"
            f" (+/-{agg.std_macro_f1:.4f})"
            f" weighted_f1={agg.mean_weighted_f1:.4f}"
        )
        spec_cfg = config.task_by_id(task_id)
        rows = [p for p in predictions if p[0] == task_id]
        if rows:
            fps, fns = error_cases(
                [r[3] for r in rows],
                [r[4] for r in rows],
                [r[2] for r in rows],
                spec_cfg.positive_labels,
            )
            fp_path = run_dir / f"false_positives_{args.pipeline}_{task_id}.jsonl"
            fn_path = run_dir / f"false_negatives_{args.pipeline}_{task_id}.jsonl"
            export_error_cases(fps, fp_path)
            export_error_cases(fns, fn_path)
            outputs.extend([fp_path, fn_path])
    write_manifest(run_dir, "evaluate", config, outputs)
    return 0


def cmd_profile(config: WorkspaceConfig, args: argparse.Namespace) -> int:
    ckpt_path = _train_checkpoint_path(config)
    if not ckpt_path.exists():
        raise ConfigError(
            f"no mtl checkpoint at {ckpt_path}; run the train command first"
        )
    model = load_mtl_checkpoint(ckpt_path)
    datasets = _load_datasets(config)
    window = args.window if args.window is not None else config.features.history_window
    run_dir = run_directory(config, "profile")
    outputs = []
    for task_id, ds in datasets.items():
        if task_id not in model.heads:
            continue
        spec = config.task_by_id(task_id)

        def classify(text: str, _tid=task_id) -> str:
            return model.predict(_tid, [text])[0]

        profile = profile_history(
            classify,
            ds.users,
            window,
            spec.hateful_labels,
            dataset_target_groups(ds),
        )
        out = run_dir / f"history_profile_{task_id}.json"
        out.write_text(json.dumps(profile.to_json_dict(), indent=2), "utf-8")
        outputs.append(out)
        print(f"task {task_id}: profiled window={window}")
        for group, mean in sorted(profile.group_means.items()):
            print(f"  {group:>12}: mean hateful history posts {mean:.3f}")
    write_manifest(run_dir, "profile", config, outputs)
    return 0


def cmd_report(config: WorkspaceConfig, args: argparse.Namespace) -> int:
    run_dir = run_directory(config, "report")
    entries = []
    for path in sorted(config.output_dir.rglob("*.json")):
        if path.name in ("manifest.json", "summary.json"):
            continue
        try:
            content = json.loads(path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError):
            continue
        entry = {"path": str(path.relative_to(config.output_dir))}
        if isinstance(content, dict):
            for key in ("macro_f1", "weighted_f1", "mean_macro_f1", "mean_weighted_f1"):
                if key in content:
                    entry[key] = content[key]
            if "window" in content and "groups" in content:
                entry["window"] = content["window"]
                entry["groups"] = sorted(content["groups"])
        entries.append(entry)
    summary = {"reports": entries, "count": len(entries)}
    out = run_dir / "summary.json"
    out.write_text(json.dumps(summary, indent=2), "utf-8")
    write_manifest(run_dir, "report", config, [out])
    print(f"summary of {len(entries)} report files -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hatemtl",
        description="Multi-task hate detection pipeline over a workspace config.",
    )
    parser.add_argument("--config", required=True, help="workspace config JSON file")
    parser.add_argument("--seed", type=int, help="override the workspace seed")
    parser.add_argument("--output-dir", help="override the output directory")
    strictness = parser.add_mutually_exclusive_group()
    strictness.add_argument(
        "--strict", dest="strict", action="store_true", default=None,
        help="fail on any malformed corpus line",
    )
    strictness.add_argument(
        "--lenient", dest="strict", action="store_false",
        help="skip malformed corpus lines with a warning",
    )

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="load and validate all corpora")
    sub.add_parser("split", help="write k-fold split files")

    p_train = sub.add_parser("train", help="train stl or mtl models on one fold")
    p_train.add_argument("--mode", choices=("stl", "mtl"), default="mtl")
    p_train.add_argument("--encoder", choices=("transformer", "cnn", "gru"),
                         help="override the encoder kind")
    p_train.add_argument("--fold", type=int, default=0)

    p_fuse = sub.add_parser("fuse", help="train fusion heads from an mtl checkpoint")
    p_fuse.add_argument(
        "--features", action="append",
        help="feature mask: all, none, or comma list of intra,inter,tb; repeatable",
    )
    p_fuse.add_argument("--fold", type=int, default=0)

    p_eval = sub.add_parser("evaluate", help="run the cross-validation protocol")
    p_eval.add_argument("--pipeline", choices=("stl", "mtl", "fusion"), default="mtl")
    p_eval.add_argument("--features", action="append")
    p_eval.add_argument("--runs", type=int)
    p_eval.add_argument("--parallel-folds", type=int, default=1)

    p_profile = sub.add_parser("profile", help="profile users' historical posts")
    p_profile.add_argument("--window", type=int)

    sub.add_parser("report", help="merge all reports into one summary")
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "split": cmd_split,
    "train": cmd_train,
    "fuse": cmd_fuse,
    "evaluate": cmd_evaluate,
    "profile": cmd_profile,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if args.strict is not None:
        overrides["strict"] = args.strict
    if getattr(args, "encoder", None):
        overrides["encoder"] = {"kind": args.encoder}
    try:
        config = load_workspace_config(args.config, overrides)
        return _COMMANDS[args.command](config, args)
    except (ConfigError, CorpusError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
