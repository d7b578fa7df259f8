"""The k-fold x repeated-runs evaluation protocol.

cross_validate trains the selected pipeline once per (run, fold), scores
the held-out fold, and aggregates by arithmetic mean. Fold assignment is
fixed per task; runs differ only in training randomness (disable with
vary_runs=False to make runs byte-identical). Fold jobs are independent
and can execute in separate processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .corpus import Dataset, FoldSplit, kfold_split, records_for
from .encoder import EncoderConfig
from .evaluation import MetricsReport, RunAggregate, score_predictions
from .fusion import (
    DEFAULT_TB_PROJECTION,
    BundleBuilder,
    FeatureMask,
    train_fusion,
)
from .fusion import predict as _fusion_predict
from .mtl import TrainingConfig, train_mtl, train_stl, transfer_shared
from .seeding import derive_seed

PIPELINE_MODES = ("stl", "mtl", "fusion", "constant")


@dataclass(frozen=True)
class PipelineSpec:
    """Names the pipeline under evaluation and its settings."""

    mode: str
    encoder_config: EncoderConfig = field(default_factory=EncoderConfig)
    training_config: TrainingConfig = field(default_factory=TrainingConfig)
    feature_mask: FeatureMask = field(default_factory=FeatureMask.all)
    tb_projection_dim: int = DEFAULT_TB_PROJECTION
    max_vocab: int = 20_000
    max_length: int = 64
    neighbors: int = 3
    tweets_per_neighbor: int = 5
    history_cap: int = 200
    history_batch: int = 50
    max_features: int = 10_000
    constant_label: str | None = None

    def __post_init__(self):
        if self.mode not in PIPELINE_MODES:
            raise ValueError(f"unknown pipeline mode {self.mode!r}")
        if self.mode == "constant" and not self.constant_label:
            raise ValueError("constant pipeline needs constant_label")


def _fold_reports(
    spec: PipelineSpec,
    tasks: Mapping[str, Dataset],
    splits: Mapping[str, Sequence[FoldSplit]],
    target_tasks: Sequence[str],
    run: int,
    fold: int,
    run_seed: int,
    events: list[dict] | None,
    prediction_sink: list | None = None,
) -> dict[str, MetricsReport]:
    tcfg = replace(spec.training_config, seed=run_seed)
    out: dict[str, MetricsReport] = {}

    def record_predictions(task_id, test, predicted):
        # one full pass over the data: run 0's folds cover every record once
        if prediction_sink is not None and run == 0:
            for r, p_label in zip(test, predicted):
                prediction_sink.append((task_id, run, fold, r.text, r.label, p_label))

    if spec.mode == "constant":
        for task_id in target_tasks:
            ds = tasks[task_id]
            test = records_for(ds, splits[task_id][fold].test_ids)
            predicted = [spec.constant_label] * len(test)
            record_predictions(task_id, test, predicted)
            out[task_id] = score_predictions(
                [r.label for r in test], predicted, ds.task.label_set
            )
        return out

    if spec.mode == "stl":
        for task_id in target_tasks:
            ds = tasks[task_id]
            split = splits[task_id][fold]
            model, _hist = train_stl(
                ds, split, spec.encoder_config, tcfg,
                max_vocab=spec.max_vocab, max_length=spec.max_length,
                run=run, fold=fold, events=events,
            )
            test = records_for(ds, split.test_ids)
            predicted = model.predict([r.text for r in test])
            record_predictions(task_id, test, predicted)
            out[task_id] = score_predictions(
                [r.label for r in test], predicted, ds.task.label_set
            )
        return out

    joint = {task_id: (tasks[task_id], splits[task_id][fold]) for task_id in tasks}
    model, _hist = train_mtl(
        joint, spec.encoder_config, tcfg,
        max_vocab=spec.max_vocab, max_length=spec.max_length,
        run=run, fold=fold, events=events,
    )
    if spec.mode == "mtl":
        for task_id in target_tasks:
            ds = tasks[task_id]
            test = records_for(ds, splits[task_id][fold].test_ids)
            predicted = model.predict(task_id, [r.text for r in test])
            record_predictions(task_id, test, predicted)
            out[task_id] = score_predictions(
                [r.label for r in test], predicted, ds.task.label_set
            )
        return out

    shared = transfer_shared(model)
    for task_id in target_tasks:
        ds = tasks[task_id]
        split = splits[task_id][fold]
        builder = BundleBuilder.for_dataset(
            ds, shared,
            max_features=spec.max_features,
            neighbors=spec.neighbors,
            tweets_per_neighbor=spec.tweets_per_neighbor,
            history_cap=spec.history_cap,
            history_batch=spec.history_batch,
        )
        bundles = builder.build(ds)
        labels = {r.tweet_id: r.label for r in ds.records}
        fusion_model = train_fusion(
            bundles, labels, ds.task,
            sorted(split.train_ids), tcfg,
            mask=spec.feature_mask,
            tb_projection_dim=spec.tb_projection_dim,
        )

        test = records_for(ds, split.test_ids)
        predicted = [
            predict_one(fusion_model, bundles[r.tweet_id]) for r in test
        ]
        record_predictions(task_id, test, predicted)
        out[task_id] = score_predictions(
            [r.label for r in test], predicted, ds.task.label_set
        )
    return out


def predict_one(model, bundle) -> str:
    return _fusion_predict(model, bundle)[0]


def _job(args) -> tuple[int, int, dict[str, MetricsReport], list]:
    spec, tasks, splits, target_tasks, run, fold, run_seed = args
    sink: list = []
    reports = _fold_reports(
        spec, tasks, splits, target_tasks, run, fold, run_seed,
        events=None, prediction_sink=sink,
    )
    return run, fold, reports, sink


def cross_validate(
    spec: PipelineSpec,
    tasks: Mapping[str, Dataset],
    k: int = 5,
    runs: int = 5,
    seed: int = 0,
    val_fraction: float = 0.15,
    target_tasks: Sequence[str] | None = None,
    vary_runs: bool = True,
    events: list[dict] | None = None,
    parallel_folds: int = 1,
    prediction_sink: list | None = None,
) -> dict[str, RunAggregate]:
    """Full protocol: k folds x `runs` repetitions per target task.

    Returns one RunAggregate per target task (all tasks by default).
    """
    if spec.mode in ("mtl", "fusion") and len(tasks) < 2:
        raise ValueError(f"{spec.mode} evaluation needs at least two tasks")
    target_tasks = list(target_tasks if target_tasks is not None else tasks)
    splits = {
        task_id: kfold_split(
            ds, k, val_fraction, derive_seed(seed, "split", task_id)
        )
        for task_id, ds in tasks.items()
    }
    jobs = []
    for run in range(runs):
        run_seed = derive_seed(seed, "run", run) if vary_runs else derive_seed(seed, "run", 0)
        for fold in range(k):
            jobs.append((spec, tasks, splits, target_tasks, run, fold, run_seed))

    collected: dict[str, dict[tuple[int, int], MetricsReport]] = {
        task_id: {} for task_id in target_tasks
    }
    if parallel_folds > 1:
        with ProcessPoolExecutor(max_workers=parallel_folds) as pool:
            for run, fold, reports, sink in pool.map(_job, jobs):
                if prediction_sink is not None:
                    prediction_sink.extend(sink)
                for task_id, report in reports.items():
                    collected[task_id][(run, fold)] = report
    else:
        for args in jobs:
            spec_, tasks_, splits_, targets_, run, fold, run_seed = args
            reports = _fold_reports(
                spec_, tasks_, splits_, targets_, run, fold, run_seed,
                events, prediction_sink,
            )
            for task_id, report in reports.items():
                collected[task_id][(run, fold)] = report
    return {
        task_id: RunAggregate(reports=collected[task_id], runs=runs, folds=k)
        for task_id in target_tasks
    }
