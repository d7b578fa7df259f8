"""Workspace configuration and run manifests.

One JSON config file drives every command; command-line flags override
config fields, which override the built-in defaults (the defaults
reproduce the reference training protocol). Relative paths resolve
against the config file's directory unless the HATEMTL_WORKSPACE
environment variable points elsewhere.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import TaskId
from .encoder import EncoderConfig
from .mtl import TrainingConfig

WORKSPACE_ENV_VAR = "HATEMTL_WORKSPACE"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    task: TaskId
    corpus_path: Path
    positive_labels: tuple[str, ...]
    hateful_labels: tuple[str, ...]


@dataclass(frozen=True)
class FeatureSettings:
    max_features: int = 10_000
    lexicon: str | None = None
    neighbors: int = 3
    tweets_per_neighbor: int = 5
    history_window: int = 50
    history_cap: int = 200
    history_batch: int = 50
    tb_projection_dim: int = 50

    def to_dict(self) -> dict:
        return {
            "max_features": self.max_features,
            "lexicon": self.lexicon,
            "neighbors": self.neighbors,
            "tweets_per_neighbor": self.tweets_per_neighbor,
            "history_window": self.history_window,
            "history_cap": self.history_cap,
            "history_batch": self.history_batch,
            "tb_projection_dim": self.tb_projection_dim,
        }


@dataclass(frozen=True)
class TokenizerSettings:
    max_vocab: int = 20_000
    max_length: int = 64

    def to_dict(self) -> dict:
        return {"max_vocab": self.max_vocab, "max_length": self.max_length}


@dataclass(frozen=True)
class EvaluationSettings:
    folds: int = 5
    val_fraction: float = 0.15

    def to_dict(self) -> dict:
        return {"folds": self.folds, "val_fraction": self.val_fraction}


@dataclass(frozen=True)
class WorkspaceConfig:
    root: Path
    tasks: tuple[TaskSpec, ...]
    users_path: Path | None
    output_dir: Path
    seed: int = 0
    strict: bool = True
    features: FeatureSettings = field(default_factory=FeatureSettings)
    tokenizer: TokenizerSettings = field(default_factory=TokenizerSettings)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)

    def task_by_id(self, task_id: str) -> TaskSpec:
        for spec in self.tasks:
            if spec.task.id == task_id:
                return spec
        raise ConfigError(f"unknown task id {task_id!r}")

    def resolved_dict(self) -> dict:
        """Fully resolved config values, for hashing and manifests."""
        return {
            "tasks": [
                {
                    "id": s.task.id,
                    "labels": list(s.task.label_set),
                    "corpus": str(s.corpus_path),
                    "positive_labels": list(s.positive_labels),
                    "hateful_labels": list(s.hateful_labels),
                }
                for s in self.tasks
            ],
            "users": str(self.users_path) if self.users_path else None,
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "strict": self.strict,
            "features": self.features.to_dict(),
            "tokenizer": self.tokenizer.to_dict(),
            "encoder": self.encoder.to_dict(),
            "training": self.training.to_dict(),
            "evaluation": self.evaluation.to_dict(),
        }

    def config_hash(self) -> str:
        canonical = json.dumps(
            self.resolved_dict(), sort_keys=True, separators=(",", ":")
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _build_section(cls, obj: Mapping, section: str):
    try:
        return cls(**obj)
    except TypeError as exc:
        raise ConfigError(f"bad {section!r} section: {exc}") from exc


def load_workspace_config(
    path: str | Path, overrides: Mapping | None = None
) -> WorkspaceConfig:
    """Parse and validate the workspace config file.

    `overrides` maps top-level config keys to replacement values (the flag
    layer); nested sections merge key-by-key.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    if overrides:
        for key, value in overrides.items():
            if isinstance(value, Mapping) and isinstance(raw.get(key), dict):
                raw[key].update(value)
            else:
                raw[key] = value

    env_root = os.environ.get(WORKSPACE_ENV_VAR)
    root = Path(env_root) if env_root else path.parent

    tasks_raw = raw.get("tasks")
    if not tasks_raw:
        raise ConfigError(f"{path}: at least one task is required")
    tasks = []
    for i, entry in enumerate(tasks_raw):
        try:
            task = TaskId(id=entry["id"], label_set=tuple(entry["labels"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: tasks[{i}]: {exc}") from exc
        if "corpus" not in entry:
            raise ConfigError(f"{path}: tasks[{i}] missing 'corpus'")
        positive = tuple(entry.get("positive_labels", task.label_set[:-1]))
        unknown = set(positive) - set(task.label_set)
        if unknown:
            raise ConfigError(
                f"{path}: tasks[{i}] positive_labels not in label set: {sorted(unknown)}"
            )
        hateful = tuple(entry.get("hateful_labels", positive))
        if set(hateful) - set(task.label_set):
            raise ConfigError(f"{path}: tasks[{i}] hateful_labels not in label set")
        tasks.append(
            TaskSpec(
                task=task,
                corpus_path=root / entry["corpus"],
                positive_labels=positive,
                hateful_labels=hateful,
            )
        )
    if len({s.task.id for s in tasks}) != len(tasks):
        raise ConfigError(f"{path}: duplicate task ids")

    users = raw.get("users")
    features = _build_section(FeatureSettings, raw.get("features", {}), "features")
    tokenizer = _build_section(TokenizerSettings, raw.get("tokenizer", {}), "tokenizer")
    evaluation = _build_section(
        EvaluationSettings, raw.get("evaluation", {}), "evaluation"
    )
    try:
        encoder = EncoderConfig.from_dict(raw.get("encoder", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'encoder' section: {exc}") from exc
    try:
        training = TrainingConfig(**raw.get("training", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'training' section: {exc}") from exc

    return WorkspaceConfig(
        root=root,
        tasks=tuple(tasks),
        users_path=(root / users) if users else None,
        output_dir=root / raw.get("output_dir", "out"),
        seed=int(raw.get("seed", 0)),
        strict=bool(raw.get("strict", True)),
        features=features,
        tokenizer=tokenizer,
        encoder=encoder,
        training=training,
        evaluation=evaluation,
    )


def check_input_paths(config: WorkspaceConfig) -> None:
    """Referenced inputs must exist before a command starts."""
    for spec in config.tasks:
        if not spec.corpus_path.exists():
            raise ConfigError(f"corpus file not found: {spec.corpus_path}")
    if config.users_path is not None and not config.users_path.exists():
        raise ConfigError(f"users file not found: {config.users_path}")


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_hash: str
    package_version: str
    created_utc: str
    seed: int
    outputs: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "package_version": self.package_version,
            "created_utc": self.created_utc,
            "seed": self.seed,
            "outputs": list(self.outputs),
        }


def write_manifest(
    run_dir: Path, command: str, config: WorkspaceConfig, outputs: Sequence[Path]
) -> Path:
    from . import __version__

    manifest = RunManifest(
        command=command,
        config_hash=config.config_hash(),
        package_version=__version__,
        created_utc=datetime.now(timezone.utc).isoformat(),
        seed=config.seed,
        outputs=tuple(sorted(str(p.relative_to(run_dir)) for p in outputs)),
    )
    path = run_dir / "manifest.json"
    path.write_text(json.dumps(manifest.to_json_dict(), indent=2), "utf-8")
    return path


def run_directory(config: WorkspaceConfig, command: str) -> Path:
    """Deterministic per-command output directory: reruns with the same
    config overwrite the same location."""
    run_id = f"{command}-{config.config_hash()[:12]}"
    out = config.output_dir / run_id
    out.mkdir(parents=True, exist_ok=True)
    return out
