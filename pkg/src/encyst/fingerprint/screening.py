"""Pool screening against simulated attacked models.

Not every boundary-straddling sample is equally sensitive: some flip under
nearly any perturbation of the licensed model, others behave like coin
flips. Screening queries each pooled pair against a bank of privately
seeded attacked variants (retrained / pruned / fine-tuned stand-ins) and
keeps only the pairs whose stored label flips consistently, which
concentrates the pool on samples that generalize to unseen attacks.
"""

from __future__ import annotations

import numpy as np

from .pool import FingerprintPool


def flip_matrix(pool: FingerprintPool, handles) -> np.ndarray:
    """Boolean (n_handles, n_pairs) matrix: handle's label != stored label."""
    images = np.stack([p.image for p in pool.pairs])
    expected = np.array([p.expected_label for p in pool.pairs])
    rows = [np.asarray(h.predict_top1(images)) != expected for h in handles]
    return np.stack(rows)


def screen_pool(pool: FingerprintPool, handles,
                min_flips: int | None = None) -> FingerprintPool:
    """Keep the pairs flipped by at least ``min_flips`` of ``handles``.

    ``min_flips`` defaults to all of them (unanimous flip). Consumption
    marks survive for the kept pairs. Returns a new pool; the input pool
    is not modified.
    """
    handles = list(handles)
    if not handles:
        raise ValueError("need at least one screening handle")
    if min_flips is None:
        min_flips = len(handles)
    if not 1 <= min_flips <= len(handles):
        raise ValueError(f"min_flips must be in 1..{len(handles)}, "
                         f"got {min_flips}")
    if not len(pool):
        return FingerprintPool(model_hash=pool.model_hash)
    counts = flip_matrix(pool, handles).sum(axis=0)
    kept = [p for p, c in zip(pool.pairs, counts) if c >= min_flips]
    out = FingerprintPool(kept, model_hash=pool.model_hash)
    out._consumed = {p.pair_id for p in kept} & pool._consumed
    return out
