"""Opaque top-1 predictor abstraction shared by every downstream consumer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np


class AccessViolation(RuntimeError):
    """White-box information requested from a black-box handle."""


@dataclass
class ModelHandle:
    """A predictor with explicit access discipline.

    ``predict_top1`` is always available and is the only surface the
    fingerprint machinery touches. Probability access and the underlying
    model object require ``access == "white-box"``.
    """

    name: str
    num_classes: int
    proba_fn: Callable[[np.ndarray], np.ndarray]
    access: str = "black-box"
    metadata: dict = field(default_factory=dict)
    model: Any = None
    query_count: int = 0

    def predict_top1(self, images: np.ndarray) -> np.ndarray:
        """Top-1 labels for a batch; ties break to the lowest class index."""
        images = np.asarray(images, dtype=np.float32)
        if images.ndim == 3:
            images = images[None]
        self.query_count += images.shape[0]
        return self.proba_fn(images).argmax(axis=1)

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        if self.access != "white-box":
            raise AccessViolation(f"{self.name}: probability access is white-box only")
        images = np.asarray(images, dtype=np.float32)
        if images.ndim == 3:
            images = images[None]
        self.query_count += images.shape[0]
        return self.proba_fn(images)

    def require_model(self):
        if self.access != "white-box" or self.model is None:
            raise AccessViolation(f"{self.name}: parameter access is white-box only")
        return self.model

    def as_black_box(self) -> "ModelHandle":
        """A restricted view that shares the query counter semantics."""
        return ModelHandle(name=self.name, num_classes=self.num_classes,
                           proba_fn=self.proba_fn, access="black-box",
                           metadata=dict(self.metadata))


def predict_top1(handle: ModelHandle, image: np.ndarray) -> int:
    return int(handle.predict_top1(image)[0])


class CountingHandle(ModelHandle):
    """Test instrument: counts label queries and flags any white-box access."""

    def __init__(self, inner: ModelHandle):
        super().__init__(name=inner.name, num_classes=inner.num_classes,
                         proba_fn=inner.proba_fn, access="black-box")
        self.label_queries = 0
        self.whitebox_attempts = 0

    def predict_top1(self, images):
        images = np.asarray(images, dtype=np.float32)
        n = 1 if images.ndim == 3 else images.shape[0]
        self.label_queries += n
        return super().predict_top1(images)

    def predict_proba(self, images):
        self.whitebox_attempts += 1
        return super().predict_proba(images)

    def require_model(self):
        self.whitebox_attempts += 1
        return super().require_model()
