"""Global magnitude pruning with a frozen mask and brief retraining."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from ..models import ModelHandle, TrainConfig
from .report import AttackReport


def prune_mask(state: dict[str, np.ndarray], fraction: float
               ) -> dict[str, np.ndarray]:
    """Masks zeroing exactly floor(fraction * total) smallest-|w| entries."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"prune fraction must lie in (0,1), got {fraction}")
    magnitudes = np.concatenate([np.abs(v).ravel() for v in state.values()])
    k = int(np.floor(fraction * magnitudes.size))
    masks = {name: np.ones_like(v) for name, v in state.items()}
    if k == 0:
        return masks
    # threshold at the k-th smallest magnitude; break ties by global order
    order = np.argsort(magnitudes, kind="stable")[:k]
    flat_cut = np.zeros(magnitudes.size, dtype=bool)
    flat_cut[order] = True
    offset = 0
    for name, v in state.items():
        n = v.size
        masks[name] = (~flat_cut[offset:offset + n]).astype(np.float32).reshape(v.shape)
        offset += n
    return masks


def prune_weights(handle: ModelHandle, fraction: float,
                  retrain_set: Dataset | None = None,
                  test_set: Dataset | None = None,
                  retrain_config: TrainConfig | None = None
                  ) -> tuple[ModelHandle, AttackReport]:
    """Zero the globally smallest weights, then briefly retrain the survivors."""
    base = handle.require_model()
    pruned = base.clone()
    state = pruned.state_dict()
    masks = prune_mask(state, fraction)
    for name, m in masks.items():
        pruned.params[name].data *= m
    eval_set = test_set if test_set is not None else retrain_set
    before = base.accuracy(eval_set) if eval_set is not None else None
    if retrain_set is not None:
        cfg = retrain_config or TrainConfig(epochs=1)
        pruned.fit(retrain_set, cfg, mask=masks)
    after = pruned.accuracy(eval_set) if eval_set is not None else None
    new_handle = pruned.handle("pruned", access="white-box",
                               test_accuracy=after)
    total = sum(m.size for m in masks.values())
    zeroed = int(sum((m == 0).sum() for m in masks.values()))
    report = AttackReport(attack="prune",
                          clean_accuracy_before=before if before is not None else 0.0,
                          clean_accuracy_after=after if after is not None else 0.0,
                          params={"fraction": fraction, "pruned": zeroed,
                                  "total": total})
    return new_handle, report
