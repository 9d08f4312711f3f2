"""Per-class smoothness filtering of candidate samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..models import ModelHandle, PerceptualMetric


class SingletonClass(ValueError):
    """A class with fewer than two references has no pairwise threshold."""


def adaptive_threshold(references_by_class: dict[int, np.ndarray],
                       metric: PerceptualMetric) -> dict[int, float]:
    """Per-class mean pairwise perceptual distance among reference images."""
    thresholds = {}
    for cls, refs in references_by_class.items():
        refs = np.asarray(refs, dtype=np.float32)
        n = len(refs)
        if n < 2:
            raise SingletonClass(f"class {cls} has {n} reference(s); need >= 2")
        ia, ib = np.triu_indices(n, k=1)
        dists = metric.distance_pairs(refs[ia], refs[ib])
        thresholds[cls] = float(dists.mean())
    return thresholds


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    predicted_class: int
    reason: str = ""

    def __bool__(self):
        return self.accepted


def filter_smooth(candidate: np.ndarray, xi: dict[int, float],
                  references_by_class: dict[int, np.ndarray],
                  handle: ModelHandle,
                  metric: PerceptualMetric) -> FilterDecision:
    """Accept iff the candidate is within xi_c of EVERY reference of its
    predicted class c. Pure: mutates nothing."""
    candidate = np.asarray(candidate, dtype=np.float32)
    cls = int(handle.predict_top1(candidate)[0])
    if cls not in references_by_class:
        return FilterDecision(False, cls, f"no references for class {cls}")
    refs = np.asarray(references_by_class[cls], dtype=np.float32)
    tiled = np.broadcast_to(candidate, refs.shape)
    dists = metric.distance_pairs(tiled, refs)
    bound = xi[cls]
    if np.all(dists <= bound):
        return FilterDecision(True, cls)
    worst = float(dists.max())
    return FilterDecision(False, cls,
                          f"distance {worst:.4f} exceeds threshold {bound:.4f}")
