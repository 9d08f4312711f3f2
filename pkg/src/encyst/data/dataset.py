"""Dataset container and stratified splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Immutable image/label set: images N x C x H x W in [0,1], int labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[0] == 0:
            raise ValueError(f"images must be non-empty NCHW, got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("labels must be one per image")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.images[indices], self.labels[indices], self.num_classes)

    def restrict_classes(self, classes) -> "Dataset":
        mask = np.isin(self.labels, list(classes))
        return self.subset(np.flatnonzero(mask))

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "label"])
            for i, y in enumerate(self.labels):
                w.writerow([i, int(y)])


@dataclass(frozen=True)
class SplitSpec:
    """Fraction of data reserved for autoencoder training; rest is model data."""

    autoencoder_fraction: float = 0.20
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.autoencoder_fraction < 1.0:
            raise ValueError("autoencoder_fraction must lie in (0, 1)")


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Stratified split into (autoencoder_set, model_set).

    Per class, floor/round the fraction so overall proportions hold to
    within one sample; the two index sets are disjoint and exhaustive.
    """
    rng = np.random.default_rng(spec.seed)
    ae_idx = []
    for c in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == c)
        if members.size and members.size < 2:
            raise SplitError(f"class {c} has fewer than 2 samples")
        rng.shuffle(members)
        k = int(round(members.size * spec.autoencoder_fraction))
        k = min(max(k, 1), members.size - 1) if members.size else 0
        ae_idx.append(members[:k])
    ae_idx = np.sort(np.concatenate(ae_idx))
    mask = np.ones(len(dataset), dtype=bool)
    mask[ae_idx] = False
    model_idx = np.flatnonzero(mask)
    return dataset.subset(ae_idx), dataset.subset(model_idx)
