"""Disposable fingerprint supply: pairs, issued sets, and the pool ledger."""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset, load_idx, save_idx
from ..models import ModelHandle


class PoolExhausted(RuntimeError):
    """Fewer unconsumed pairs than the requested set size."""


@dataclass
class FingerprintPair:
    """One (sample, expected-label) verification key."""

    image: np.ndarray
    expected_label: int
    pair_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    origin: int = 0
    noise: float = 0.0
    side: str = "inner"
    mu: float = 0.0
    sigma: float = 0.05


@dataclass(frozen=True)
class FingerprintSet:
    """An atomically issued batch of V pairs."""

    issuance_id: str
    pairs: tuple[FingerprintPair, ...]

    def __len__(self):
        return len(self.pairs)


class FingerprintPool:
    """Consumption-ledgered supply of fingerprint pairs.

    Issuance is atomic: concurrent issuers never receive overlapping pairs.
    """

    def __init__(self, pairs=(), model_hash: str = ""):
        self._pairs: list[FingerprintPair] = list(pairs)
        self._consumed: set[str] = set()
        self.model_hash = model_hash
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._pairs)

    @property
    def pairs(self) -> tuple[FingerprintPair, ...]:
        return tuple(self._pairs)

    def remaining(self) -> int:
        with self._lock:
            return len(self._pairs) - len(self._consumed)

    def add(self, pairs) -> None:
        with self._lock:
            self._pairs.extend(pairs)

    def issue(self, v: int) -> FingerprintSet:
        """Atomically mark V unconsumed pairs as used and hand them out."""
        if v < 1:
            raise ValueError(f"set size must be >= 1, got {v}")
        with self._lock:
            fresh = [p for p in self._pairs if p.pair_id not in self._consumed]
            if len(fresh) < v:
                raise PoolExhausted(
                    f"requested {v} pairs, only {len(fresh)} unconsumed")
            chosen = fresh[:v]
            self._consumed.update(p.pair_id for p in chosen)
        return FingerprintSet(issuance_id=uuid.uuid4().hex, pairs=tuple(chosen))

    def audit(self, handle: ModelHandle) -> bool:
        """Re-query every stored label against the licensed handle."""
        if not self._pairs:
            return True
        images = np.stack([p.image for p in self._pairs])
        labels = handle.predict_top1(images)
        return bool(all(int(l) == p.expected_label
                        for l, p in zip(labels, self._pairs)))

    # -- persistence -------------------------------------------------------
    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        with self._lock:
            pairs = list(self._pairs)
            consumed = set(self._consumed)
        manifest = {
            "model_hash": self.model_hash,
            "pairs": [{
                "id": p.pair_id, "label": p.expected_label,
                "origin": p.origin, "noise": p.noise, "side": p.side,
                "mu": p.mu, "sigma": p.sigma,
                "consumed": p.pair_id in consumed,
            } for p in pairs],
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1)
        if pairs:
            ds = Dataset(np.stack([p.image for p in pairs]),
                         np.array([p.expected_label for p in pairs],
                                  dtype=np.int64),
                         max(p.expected_label for p in pairs) + 1)
            save_idx(ds, os.path.join(directory, "samples.idx"),
                     os.path.join(directory, "labels.idx"))

    @classmethod
    def load(cls, directory: str) -> "FingerprintPool":
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        entries = manifest["pairs"]
        images = (load_idx(os.path.join(directory, "samples.idx"),
                           os.path.join(directory, "labels.idx")).images
                  if entries else np.zeros((0, 1, 1, 1), np.float32))
        pool = cls(model_hash=manifest.get("model_hash", ""))
        for entry, image in zip(entries, images):
            pool._pairs.append(FingerprintPair(
                image=image, expected_label=int(entry["label"]),
                pair_id=entry["id"], origin=int(entry["origin"]),
                noise=float(entry["noise"]), side=entry["side"],
                mu=float(entry["mu"]), sigma=float(entry["sigma"])))
            if entry["consumed"]:
                pool._consumed.add(entry["id"])
        return pool


def build_fingerprint_set(pool: FingerprintPool, v: int = 7) -> FingerprintSet:
    return pool.issue(v)
