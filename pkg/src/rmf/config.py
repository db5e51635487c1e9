"""Run configuration: strict JSON parsing with unknown-key rejection.

Measurement provenance demands that no setting be silently ignored, so any
key the schema does not know is an error naming the offending path. Seeds
omitted from sub-sections default to the run seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .attacks import AttackSpec, CleanLabelParams, StepCatalog, TriggerPattern
from .data import SyntheticSpec
from .engine import TrainConfig
from .pipeline import DecisionCriteria


class ConfigError(ValueError):
    """Malformed run configuration."""


@dataclass(frozen=True)
class DatasetConfig:
    synthetic: SyntheticSpec | None = None
    manifest: str | None = None

    def __post_init__(self):
        if (self.synthetic is None) == (self.manifest is None):
            raise ConfigError("dataset must specify exactly one of 'synthetic' or 'manifest'")


@dataclass(frozen=True)
class ModelConfig:
    class_count: int = 10
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dataset: DatasetConfig = field(default_factory=lambda: DatasetConfig(synthetic=SyntheticSpec()))
    model: ModelConfig = field(default_factory=ModelConfig)
    attack: AttackSpec = field(default_factory=lambda: AttackSpec(
        kind="pattern_backdoor", poison_fraction=0.5, target_label=0,
        trigger=TriggerPattern(), specificity="targeted"))
    criteria: DecisionCriteria = field(default_factory=DecisionCriteria)
    probe_interval_ms: int = 100
    output_dir: str = "out"


def _require_keys(d: dict, allowed: set[str], path: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"'{path}' must be an object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key '{path}.{unknown[0]}'" if path else f"unknown key '{unknown[0]}'")


def _value(d: dict, key: str, kinds, path: str, default):
    if key not in d:
        return default
    v = d[key]
    if kinds is not None and not isinstance(v, kinds):
        raise ConfigError(f"'{path}.{key}' has wrong type {type(v).__name__}")
    if isinstance(v, bool) and kinds is not None and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        raise ConfigError(f"'{path}.{key}' has wrong type bool")
    return v


def _parse_synthetic(d: dict, seed: int, path: str) -> SyntheticSpec:
    _require_keys(d, {"class_count", "per_class_train", "per_class_test", "image_size", "noise_std", "seed"}, path)
    defaults = SyntheticSpec()
    size = _value(d, "image_size", list, path, list(defaults.image_size))
    if len(size) != 3 or not all(isinstance(x, int) for x in size):
        raise ConfigError(f"'{path}.image_size' must be a list of 3 integers")
    try:
        return SyntheticSpec(
            class_count=_value(d, "class_count", int, path, defaults.class_count),
            per_class_train=_value(d, "per_class_train", int, path, defaults.per_class_train),
            per_class_test=_value(d, "per_class_test", int, path, defaults.per_class_test),
            image_size=tuple(size),
            noise_std=float(_value(d, "noise_std", (int, float), path, defaults.noise_std)),
            seed=_value(d, "seed", int, path, seed),
        )
    except ValueError as exc:
        raise ConfigError(f"'{path}': {exc}") from None


def _parse_dataset(d: dict, seed: int) -> DatasetConfig:
    _require_keys(d, {"synthetic", "manifest"}, "dataset")
    if "synthetic" in d and "manifest" in d:
        raise ConfigError("dataset must specify exactly one of 'synthetic' or 'manifest'")
    if "manifest" in d:
        manifest = _value(d, "manifest", str, "dataset", None)
        return DatasetConfig(manifest=manifest)
    synthetic = d.get("synthetic", {})
    return DatasetConfig(synthetic=_parse_synthetic(synthetic, seed, "dataset.synthetic"))


def _parse_model(d: dict, seed: int) -> ModelConfig:
    _require_keys(d, {"class_count", "epochs", "batch_size", "learning_rate", "seed"}, "model")
    defaults = TrainConfig()
    train = TrainConfig(
        epochs=_value(d, "epochs", int, "model", defaults.epochs),
        batch_size=_value(d, "batch_size", int, "model", defaults.batch_size),
        learning_rate=float(_value(d, "learning_rate", (int, float), "model", defaults.learning_rate)),
        seed=_value(d, "seed", int, "model", seed),
    )
    if train.epochs < 0:
        raise ConfigError("'model.epochs' must be non-negative")
    if train.batch_size < 1:
        raise ConfigError("'model.batch_size' must be positive")
    if train.learning_rate <= 0:
        raise ConfigError("'model.learning_rate' must be positive")
    return ModelConfig(class_count=_value(d, "class_count", int, "model", 10), train=train)


def _parse_trigger(d: dict, path: str) -> TriggerPattern:
    _require_keys(d, {"kind", "size", "intensity", "position"}, path)
    defaults = TriggerPattern()
    try:
        return TriggerPattern(
            kind=_value(d, "kind", str, path, defaults.kind),
            size=_value(d, "size", int, path, defaults.size),
            intensity=float(_value(d, "intensity", (int, float), path, defaults.intensity)),
            position=_value(d, "position", str, path, defaults.position),
        )
    except ValueError as exc:
        raise ConfigError(f"'{path}': {exc}") from None


def _parse_steps(d: dict, path: str) -> StepCatalog:
    _require_keys(d, {"knowledge", "goal", "specificity"}, path)
    def names(key):
        items = _value(d, key, list, path, [])
        if not all(isinstance(x, str) for x in items):
            raise ConfigError(f"'{path}.{key}' must be a list of step names")
        return tuple(items)
    try:
        return StepCatalog(
            knowledge_steps=names("knowledge"),
            goal_steps=names("goal"),
            specificity_steps=names("specificity"),
        )
    except ValueError as exc:
        raise ConfigError(f"'{path}': {exc}") from None


def _parse_clean_label(d: dict, path: str) -> CleanLabelParams:
    _require_keys(d, {"epsilon", "pgd_steps", "pgd_step_size", "proxy_epochs"}, path)
    defaults = CleanLabelParams()
    try:
        return CleanLabelParams(
            epsilon=float(_value(d, "epsilon", (int, float), path, defaults.epsilon)),
            pgd_steps=_value(d, "pgd_steps", int, path, defaults.pgd_steps),
            pgd_step_size=float(_value(d, "pgd_step_size", (int, float), path, defaults.pgd_step_size)),
            proxy_epochs=_value(d, "proxy_epochs", int, path, defaults.proxy_epochs),
        )
    except ValueError as exc:
        raise ConfigError(f"'{path}': {exc}") from None


def _parse_attack(d: dict) -> AttackSpec:
    _require_keys(
        d,
        {"kind", "poison_fraction", "target_label", "trigger", "specificity", "clean_label", "steps"},
        "attack",
    )
    if "kind" not in d:
        raise ConfigError("'attack.kind' is required")
    kind = _value(d, "kind", str, "attack", None)
    trigger = None
    if "trigger" in d:
        if d["trigger"] is not None:
            trigger = _parse_trigger(d["trigger"], "attack.trigger")
    elif kind in ("pattern_backdoor", "clean_label_backdoor"):
        trigger = TriggerPattern()
    steps = _parse_steps(d["steps"], "attack.steps") if "steps" in d else None
    clean_label = (
        _parse_clean_label(d["clean_label"], "attack.clean_label")
        if "clean_label" in d
        else CleanLabelParams()
    )
    target = _value(d, "target_label", int, "attack", None)
    specificity = _value(d, "specificity", str, "attack", "targeted" if target is not None else "untargeted")
    try:
        return AttackSpec(
            kind=kind,
            poison_fraction=float(_value(d, "poison_fraction", (int, float), "attack", 0.5)),
            target_label=target,
            trigger=trigger,
            specificity=specificity,
            clean_label_params=clean_label,
            steps=steps,
        )
    except ValueError as exc:
        raise ConfigError(f"'attack': {exc}") from None


def _parse_criteria(d: dict) -> DecisionCriteria:
    _require_keys(d, {"critical_threshold", "major_threshold"}, "criteria")
    defaults = DecisionCriteria()
    try:
        return DecisionCriteria(
            critical_threshold=float(_value(d, "critical_threshold", (int, float), "criteria",
                                            defaults.critical_threshold)),
            major_threshold=float(_value(d, "major_threshold", (int, float), "criteria",
                                         defaults.major_threshold)),
        )
    except ValueError as exc:
        raise ConfigError(f"'criteria': {exc}") from None


def parse_config(d: dict) -> RunConfig:
    _require_keys(d, {"seed", "dataset", "model", "attack", "criteria", "probe_interval_ms", "output_dir"}, "")
    seed = _value(d, "seed", int, "", 0)
    if seed < 0:
        raise ConfigError("'seed' must be non-negative")
    probe_interval_ms = _value(d, "probe_interval_ms", int, "", 100)
    if probe_interval_ms < 10:
        raise ConfigError("'probe_interval_ms' must be at least 10")
    return RunConfig(
        seed=seed,
        dataset=_parse_dataset(d.get("dataset", {"synthetic": {}}), seed),
        model=_parse_model(d.get("model", {}), seed),
        attack=_parse_attack(d["attack"]) if "attack" in d else RunConfig().attack,
        criteria=_parse_criteria(d.get("criteria", {})),
        probe_interval_ms=probe_interval_ms,
        output_dir=_value(d, "output_dir", str, "", "out"),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(raw)


def config_to_dict(cfg: RunConfig) -> dict:
    dataset: dict = {}
    if cfg.dataset.synthetic is not None:
        s = cfg.dataset.synthetic
        dataset["synthetic"] = {
            "class_count": s.class_count,
            "per_class_train": s.per_class_train,
            "per_class_test": s.per_class_test,
            "image_size": list(s.image_size),
            "noise_std": s.noise_std,
            "seed": s.seed,
        }
    else:
        dataset["manifest"] = cfg.dataset.manifest
    attack = {
        "kind": cfg.attack.kind,
        "poison_fraction": cfg.attack.poison_fraction,
        "target_label": cfg.attack.target_label,
        "specificity": cfg.attack.specificity,
        "trigger": None if cfg.attack.trigger is None else {
            "kind": cfg.attack.trigger.kind,
            "size": cfg.attack.trigger.size,
            "intensity": cfg.attack.trigger.intensity,
            "position": cfg.attack.trigger.position,
        },
        "clean_label": {
            "epsilon": cfg.attack.clean_label_params.epsilon,
            "pgd_steps": cfg.attack.clean_label_params.pgd_steps,
            "pgd_step_size": cfg.attack.clean_label_params.pgd_step_size,
            "proxy_epochs": cfg.attack.clean_label_params.proxy_epochs,
        },
        "steps": {
            "knowledge": list(cfg.attack.steps.knowledge_steps),
            "goal": list(cfg.attack.steps.goal_steps),
            "specificity": list(cfg.attack.steps.specificity_steps),
        },
    }
    return {
        "seed": cfg.seed,
        "dataset": dataset,
        "model": {
            "class_count": cfg.model.class_count,
            "epochs": cfg.model.train.epochs,
            "batch_size": cfg.model.train.batch_size,
            "learning_rate": cfg.model.train.learning_rate,
            "seed": cfg.model.train.seed,
        },
        "attack": attack,
        "criteria": {
            "critical_threshold": cfg.criteria.critical_threshold,
            "major_threshold": cfg.criteria.major_threshold,
        },
        "probe_interval_ms": cfg.probe_interval_ms,
        "output_dir": cfg.output_dir,
    }


def config_digest(cfg: RunConfig) -> str:
    """Digest of the measurement-relevant settings (output_dir excluded)."""
    d = config_to_dict(cfg)
    d.pop("output_dir", None)
    canonical = json.dumps(d, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
