"""Backdoor attack: stamp a trigger patch on training images and rewrite
their labels, then retrain so the trigger forces the target class."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ..models import ModelHandle, TrainConfig
from .report import AttackReport


@dataclass
class TriggerSpec:
    patch: np.ndarray = field(
        default_factory=lambda: np.ones((3, 3), dtype=np.float32))
    position: tuple[int, int] | None = None  # top-left corner; None = bottom-right
    target_label: int = 0

    def __post_init__(self):
        self.patch = np.asarray(self.patch, dtype=np.float32)
        if self.patch.ndim != 2:
            raise ValueError("patch must be 2-D (applied to every channel)")
        if self.patch.min() < 0 or self.patch.max() > 1:
            raise ValueError("patch values must lie in [0,1]")

    def corner(self, height: int, width: int) -> tuple[int, int]:
        ph, pw = self.patch.shape
        r, c = self.position if self.position is not None else (height - ph,
                                                               width - pw)
        if r < 0 or c < 0 or r + ph > height or c + pw > width:
            raise ValueError(f"patch {self.patch.shape} at {(r, c)} "
                             f"exceeds image bounds {(height, width)}")
        return r, c


def stamp(images: np.ndarray, trigger: TriggerSpec) -> np.ndarray:
    """Copy of ``images`` (NCHW) with the trigger patch applied."""
    images = np.asarray(images, dtype=np.float32)
    out = images.copy()
    ph, pw = trigger.patch.shape
    r, c = trigger.corner(images.shape[2], images.shape[3])
    out[:, :, r:r + ph, c:c + pw] = trigger.patch
    return out


def poison_indices(n: int, rate: float, seed: int = 0) -> np.ndarray:
    """Seed-deterministic choice of exactly floor(rate*n) indices."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"poison rate must lie in [0,1], got {rate}")
    k = int(np.floor(rate * n))
    return np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))


def badnet_poison(dataset: Dataset, trigger: TriggerSpec, rate: float,
                  seed: int = 0) -> Dataset:
    """Stamp the trigger onto floor(rate*N) samples and relabel them."""
    idx = poison_indices(len(dataset), rate, seed)
    images = dataset.images.copy()
    labels = dataset.labels.copy()
    if len(idx):
        images[idx] = stamp(dataset.images[idx], trigger)
        labels[idx] = trigger.target_label
    return Dataset(images, labels, dataset.num_classes)


def attack_success_rate(handle: ModelHandle, trigger: TriggerSpec,
                        test_set: Dataset) -> float:
    """Fraction of non-target-class images driven to the target when stamped."""
    keep = test_set.labels != trigger.target_label
    if not keep.any():
        return 0.0
    stamped = stamp(test_set.images[keep], trigger)
    preds = handle.predict_top1(stamped)
    return float((preds == trigger.target_label).mean())


def badnet_attack(handle: ModelHandle, model_set: Dataset, test_set: Dataset,
                  trigger: TriggerSpec | None = None, rate: float = 0.1,
                  config: TrainConfig | None = None,
                  seed: int = 0) -> tuple[ModelHandle, AttackReport]:
    """Retrain a copy of the model on poisoned data; the original is untouched."""
    trigger = trigger or TriggerSpec()
    config = config or TrainConfig(epochs=3)
    base = handle.require_model()
    attacked = base.clone()
    poisoned = badnet_poison(model_set, trigger, rate, seed=seed)
    before = base.accuracy(test_set)
    attacked.fit(poisoned, config)
    after = attacked.accuracy(test_set)
    new_handle = attacked.handle("badnet", access="white-box",
                                 test_accuracy=after)
    asr = attack_success_rate(new_handle, trigger, test_set)
    report = AttackReport(attack="badnet", clean_accuracy_before=before,
                          clean_accuracy_after=after, success_rate=asr,
                          params={"rate": rate, "seed": seed,
                                  "target_label": trigger.target_label,
                                  "patch_shape": list(trigger.patch.shape)})
    return new_handle, report
