"""Poisoning attacks on labeled datasets.

Three attack kinds are implemented:

* pattern_backdoor: stamp a fixed pixel trigger on a random subset of the
  training images and rewrite their labels to the target class.
* clean_label_backdoor: perturb target-class images against a proxy
  classifier (sign-gradient ascent on their own-label loss, projected to an
  L-infinity ball), then stamp the trigger; labels are never changed.
* label_flip: rewrite labels of a random subset, either to a fixed target
  or uniformly to some other class; images untouched.

Each attack kind carries a default catalog of named attacker steps split
into knowledge / goal / specificity phases. The step names are harness
configuration, not measured quantities; only the counts feed the effort
ledger, and they can be overridden per run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from . import engine

ATTACK_KINDS = ("pattern_backdoor", "clean_label_backdoor", "label_flip")
TRIGGER_KINDS = ("corner_square", "checkerboard")
TRIGGER_POSITIONS = ("bottom_right", "top_left")
SPECIFICITIES = ("targeted", "untargeted")


@dataclass(frozen=True)
class TriggerPattern:
    """Small fixed pixel patch, stamped by overwriting (idempotent).

    corner_square sets the whole patch to `intensity` on all channels;
    checkerboard alternates `intensity` and 0 on the (row+col) parity.
    """

    kind: str = "corner_square"
    size: int = 3
    intensity: float = 1.0
    position: str = "bottom_right"

    def __post_init__(self):
        if self.kind not in TRIGGER_KINDS:
            raise ValueError(f"unknown trigger kind '{self.kind}'")
        if self.position not in TRIGGER_POSITIONS:
            raise ValueError(f"unknown trigger position '{self.position}'")
        if self.size < 1:
            raise ValueError("trigger size must be positive")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("trigger intensity must lie in [0, 1]")


@dataclass(frozen=True)
class CleanLabelParams:
    epsilon: float = 0.1
    pgd_steps: int = 10
    pgd_step_size: float = 0.02
    proxy_epochs: int = 3

    def __post_init__(self):
        if self.epsilon < 0 or self.pgd_step_size < 0:
            raise ValueError("epsilon and pgd_step_size must be non-negative")
        if self.pgd_steps < 0 or self.proxy_epochs < 0:
            raise ValueError("pgd_steps and proxy_epochs must be non-negative")


@dataclass(frozen=True)
class StepCatalog:
    """Named attacker sub-goals per phase; counts are the list lengths."""

    knowledge_steps: tuple[str, ...] = ()
    goal_steps: tuple[str, ...] = ()
    specificity_steps: tuple[str, ...] = ()

    def __post_init__(self):
        for phase in (self.knowledge_steps, self.goal_steps, self.specificity_steps):
            if any(not name for name in phase):
                raise ValueError("step names must be non-empty")

    def counts(self) -> tuple[int, int, int]:
        return (len(self.knowledge_steps), len(self.goal_steps), len(self.specificity_steps))


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    poison_fraction: float
    target_label: int | None = None
    trigger: TriggerPattern | None = None
    specificity: str = "targeted"
    clean_label_params: CleanLabelParams = field(default_factory=CleanLabelParams)
    steps: StepCatalog | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind '{self.kind}'")
        if not 0.0 <= self.poison_fraction <= 1.0:
            raise ValueError("poison_fraction must lie in [0, 1]")
        if self.specificity not in SPECIFICITIES:
            raise ValueError(f"unknown specificity '{self.specificity}'")
        if (self.specificity == "targeted") != (self.target_label is not None):
            raise ValueError("targeted attacks require target_label, untargeted forbid it")
        if self.kind in ("pattern_backdoor", "clean_label_backdoor") and self.trigger is None:
            raise ValueError(f"{self.kind} requires a trigger")
        if self.steps is None:
            object.__setattr__(self, "steps", default_step_catalog(self.kind))


def default_step_catalog(kind: str) -> StepCatalog:
    """Stock step catalogs: clean-label 10/6/5, pattern 4/3/2, label flip 3/2/1."""
    if kind == "clean_label_backdoor":
        return StepCatalog(
            knowledge_steps=(
                "survey candidate model architectures for the domain",
                "identify the training data supply chain",
                "obtain a representative sample of the training data",
                "determine the preprocessing and input encoding",
                "select the trigger shape and placement",
                "choose the target label for misclassification",
                "study the victim training schedule",
                "assess label audits on the data pipeline",
                "pick an optimization method for the perturbation",
                "estimate the poison budget that evades review",
            ),
            goal_steps=(
                "train a proxy classifier on clean data",
                "implement the perturbation optimization loop",
                "generate perturbed target-class samples",
                "stamp the trigger on the poisoned samples",
                "inject the poisoned samples into the training set",
                "verify the backdoor activates after training",
            ),
            specificity_steps=(
                "fix the target label for triggered inputs",
                "confirm non-target classes remain unaffected",
                "restrict poisoning to target-class images",
                "tune the trigger size against visual detection",
                "validate the targeted misclassification rate",
            ),
        )
    if kind == "pattern_backdoor":
        return StepCatalog(
            knowledge_steps=(
                "obtain write access to the training data",
                "determine the input encoding",
                "select the trigger shape and placement",
                "choose the target label",
            ),
            goal_steps=(
                "stamp the trigger on selected samples",
                "rewrite the labels of stamped samples",
                "inject the poisoned samples into the training set",
            ),
            specificity_steps=(
                "fix the target label for triggered inputs",
                "validate the targeted misclassification rate",
            ),
        )
    if kind == "label_flip":
        return StepCatalog(
            knowledge_steps=(
                "obtain write access to the training labels",
                "survey the class taxonomy",
                "choose the flip strategy",
            ),
            goal_steps=(
                "select the samples to relabel",
                "rewrite the selected labels",
            ),
            specificity_steps=("fix the replacement label policy",),
        )
    raise ValueError(f"unknown attack kind '{kind}'")


def _trigger_slices(trigger: TriggerPattern, h: int, w: int):
    s = trigger.size
    if s > min(h, w):
        raise ValueError(f"trigger size {s} exceeds image size {h}x{w}")
    if trigger.position == "bottom_right":
        return slice(h - s, h), slice(w - s, w)
    return slice(0, s), slice(0, s)


def trigger_patch(trigger: TriggerPattern, channels: int) -> np.ndarray:
    """The (size, size, C) pixel block the trigger writes."""
    s = trigger.size
    if trigger.kind == "corner_square":
        patch2d = np.full((s, s), trigger.intensity)
    else:
        ii, jj = np.mgrid[0:s, 0:s]
        patch2d = np.where((ii + jj) % 2 == 0, trigger.intensity, 0.0)
    return np.repeat(patch2d[:, :, None], channels, axis=2)


def apply_trigger(images: np.ndarray, trigger: TriggerPattern) -> np.ndarray:
    """Overwrite the trigger region of every image in a (N, H, W, C) batch."""
    images = np.asarray(images, dtype=np.float64)
    n, h, w, c = images.shape
    rs, cs = _trigger_slices(trigger, h, w)
    out = images.copy()
    out[:, rs, cs, :] = trigger_patch(trigger, c)
    return out


def triggered_evaluation_set(test: LabeledDataset, spec: AttackSpec) -> LabeledDataset:
    """Test set with the attack's trigger stamped on every image, true labels kept.

    Attacks without a trigger (label_flip) evaluate on the unchanged test set.
    """
    if spec.trigger is None:
        return test.copy()
    return LabeledDataset(
        images=apply_trigger(test.images, spec.trigger),
        labels=test.labels.copy(),
        poisoned=np.ones(len(test), dtype=bool),
        class_count=test.class_count,
    )


def _check_target(spec: AttackSpec, class_count: int) -> int:
    if spec.target_label is None or not 0 <= spec.target_label < class_count:
        raise ValueError(f"target_label {spec.target_label} out of range for {class_count} classes")
    return spec.target_label


def pattern_backdoor(data: LabeledDataset, spec: AttackSpec, seed: int) -> LabeledDataset:
    """Stamp + relabel floor(fraction*N) randomly chosen samples."""
    if spec.kind != "pattern_backdoor":
        raise ValueError(f"expected pattern_backdoor spec, got '{spec.kind}'")
    target = _check_target(spec, data.class_count)
    n_poison = int(np.floor(spec.poison_fraction * len(data)))
    chosen = np.random.default_rng(seed).permutation(len(data))[:n_poison]
    out = data.copy()
    if n_poison:
        out.images[chosen] = apply_trigger(out.images[chosen], spec.trigger)
        out.labels[chosen] = target
        out.poisoned[chosen] = True
    return out


def clean_label_backdoor(data: LabeledDataset, spec: AttackSpec, proxy_seed: int) -> LabeledDataset:
    """Perturb and stamp target-class samples without touching any label.

    A proxy classifier (stock architecture) is trained on the clean data,
    then each chosen sample ascends the proxy's own-label loss by
    sign-gradient steps, clipped to the epsilon L-infinity ball and [0, 1].
    """
    if spec.kind != "clean_label_backdoor":
        raise ValueError(f"expected clean_label_backdoor spec, got '{spec.kind}'")
    target = _check_target(spec, data.class_count)
    params = spec.clean_label_params
    cls_idx = np.flatnonzero(data.labels == target)
    if len(cls_idx) == 0:
        raise ValueError(f"target class {target} absent from data")
    n_poison = int(np.floor(spec.poison_fraction * len(cls_idx)))
    chosen = np.random.default_rng([proxy_seed, 1]).permutation(cls_idx)[:n_poison]

    out = data.copy()
    if n_poison == 0:
        return out

    proxy = engine.build_model(data.class_count, data.image_shape, seed=proxy_seed)
    proxy_cfg = engine.TrainConfig(
        epochs=params.proxy_epochs,
        batch_size=min(32, len(data)),
        seed=proxy_seed,
    )
    proxy = engine.train(proxy, data, proxy_cfg).model

    originals = out.images[chosen]
    perturbed = originals.copy()
    labels = out.labels[chosen]
    for _ in range(params.pgd_steps):
        _, grad = engine.input_gradient(proxy, perturbed, labels)
        perturbed = perturbed + params.pgd_step_size * np.sign(grad)
        perturbed = np.clip(perturbed, originals - params.epsilon, originals + params.epsilon)
        perturbed = np.clip(perturbed, 0.0, 1.0)

    out.images[chosen] = apply_trigger(perturbed, spec.trigger)
    out.poisoned[chosen] = True
    return out


def label_flip(data: LabeledDataset, spec: AttackSpec, seed: int) -> LabeledDataset:
    """Relabel floor(fraction*N) samples; images stay untouched."""
    if spec.kind != "label_flip":
        raise ValueError(f"expected label_flip spec, got '{spec.kind}'")
    if spec.specificity == "untargeted" and data.class_count < 2:
        raise ValueError("untargeted label flip needs at least 2 classes")
    rng = np.random.default_rng(seed)
    n_flip = int(np.floor(spec.poison_fraction * len(data)))
    chosen = rng.permutation(len(data))[:n_flip]
    out = data.copy()
    if n_flip == 0:
        return out
    if spec.specificity == "targeted":
        out.labels[chosen] = _check_target(spec, data.class_count)
    else:
        # uniform over the class_count-1 labels that differ from the original
        offsets = rng.integers(1, data.class_count, size=n_flip)
        out.labels[chosen] = (out.labels[chosen] + offsets) % data.class_count
    out.poisoned[chosen] = True
    return out


def run_attack(data: LabeledDataset, spec: AttackSpec, seed: int) -> LabeledDataset:
    """Dispatch on the attack kind."""
    if spec.kind == "pattern_backdoor":
        return pattern_backdoor(data, spec, seed)
    if spec.kind == "clean_label_backdoor":
        return clean_label_backdoor(data, spec, seed)
    return label_flip(data, spec, seed)
