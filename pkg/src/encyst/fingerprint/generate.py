"""Candidate generation: decode boundary-straddling latent perturbations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..models import ModelHandle
from .boundary import NoiseDistribution
from .direction import PerturbDirection


class FilterExhausted(RuntimeError):
    """No candidate for this reference survived the smoothness filter."""


@dataclass
class EncystedSample:
    """A decoded perturbation of a reference, labeled by the licensed model."""

    image: np.ndarray
    origin: int              # reference index
    noise: float             # applied scale delta
    side: str                # "inner" | "outer"
    label: int               # licensed model's top-1 on the image

    def __post_init__(self):
        if self.side not in ("inner", "outer"):
            raise ValueError(f"side must be inner or outer, got {self.side!r}")


def generate_encysted(handle: ModelHandle, vae, reference: np.ndarray,
                      direction: PerturbDirection, dist: NoiseDistribution,
                      smooth_filter=None, i_prime: int = 50,
                      origin: int = 0, seed: int = 0,
                      rng: np.random.Generator | None = None
                      ) -> list[EncystedSample]:
    """Decode up to ``i_prime`` noise draws around the boundary scale.

    Each accepted candidate passed ``smooth_filter`` (if given) and is
    labeled inner/outer by comparing the licensed label against the label
    of the unperturbed reconstruction.
    """
    if i_prime < 1:
        raise ValueError(f"i_prime must be >= 1, got {i_prime}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    z = np.asarray(vae.encode(reference), dtype=np.float32)
    if z.ndim == 2:
        z = z[0]
    dvec = direction.vector(len(z))
    base_label = int(handle.predict_top1(vae.decode(z))[0])

    accepted = []
    for delta in dist.sample(rng, i_prime):
        image = vae.decode(z + np.float32(delta) * dvec)
        if smooth_filter is not None:
            decision = smooth_filter(image)
            if not decision:
                continue
        label = int(handle.predict_top1(image)[0])
        side = "inner" if label == base_label else "outer"
        accepted.append(EncystedSample(image=image, origin=origin,
                                       noise=float(delta), side=side,
                                       label=label))
    if not accepted:
        raise FilterExhausted(
            f"all {i_prime} candidates rejected for reference {origin}")
    return accepted


def pick_one(samples: list[EncystedSample],
             rng: np.random.Generator) -> EncystedSample:
    """Uniform random choice among the accepted candidates of one reference."""
    return samples[int(rng.integers(len(samples)))]
