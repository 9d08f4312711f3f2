"""Reference-set curation for fingerprint pools.

The smoothness filter accepts a candidate only if it is closer to every
reference of its predicted class than the class's mean pairwise distance.
That bar is only reachable when the references themselves are spread out,
so we pick each class's references by greedy farthest-point traversal of a
candidate pool: maximally dispersed exemplars inflate the adaptive
threshold without moving the candidates.
"""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from ..models import ModelHandle, PerceptualMetric


class NotEnoughReferences(ValueError):
    """A class has fewer usable images than the requested reference count."""


def _pairwise(metric: PerceptualMetric, images: np.ndarray) -> np.ndarray:
    n = len(images)
    d = np.zeros((n, n), dtype=np.float64)
    for a in range(n - 1):
        d[a, a + 1:] = metric.distance_pairs(
            np.repeat(images[a][None], n - a - 1, axis=0), images[a + 1:])
    return d + d.T


def dispersed_indices(metric: PerceptualMetric, images: np.ndarray,
                      k: int) -> list[int]:
    """Greedy farthest-point selection of k indices, starting from 0."""
    if k < 1 or k > len(images):
        raise NotEnoughReferences(f"need 1 <= k <= {len(images)}, got {k}")
    d = _pairwise(metric, images)
    chosen = [0]
    while len(chosen) < k:
        rest = [j for j in range(len(images)) if j not in chosen]
        chosen.append(max(rest, key=lambda j: d[j, chosen].min()))
    return chosen


def select_references(handle: ModelHandle, dataset: Dataset,
                      metric: PerceptualMetric, per_class: int = 5,
                      candidate_pool: int = 60, classes=None,
                      seed: int = 0) -> Dataset:
    """Curate a reference set: per class, maximally dispersed exemplars.

    Classes are taken from the licensed model's own labels so that every
    reference is consistent with what verification queries will see.
    """
    rng = np.random.default_rng(seed)
    labels = np.asarray(handle.predict_top1(dataset.images))
    classes = sorted(set(int(c) for c in np.unique(labels))
                     if classes is None else (int(c) for c in classes))
    picked = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        if len(members) < per_class:
            raise NotEnoughReferences(
                f"class {c} has {len(members)} images, need {per_class}")
        pool = rng.choice(members, min(candidate_pool, len(members)),
                          replace=False)
        keep = dispersed_indices(metric, dataset.images[pool], per_class)
        picked.extend(pool[keep])
    picked = np.asarray(picked)
    return Dataset(dataset.images[picked], labels[picked],
                   dataset.num_classes)
