"""Choice of which latent dimensions to perturb."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateLatent(ValueError):
    """Every latent dimension is inactive on the probe set."""


@dataclass(frozen=True)
class PerturbDirection:
    """Axis-aligned unit direction over a subset of latent dimensions."""

    dims: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.dims:
            raise ValueError("direction needs at least one dimension")
        norm = float(np.linalg.norm(self.weights))
        if abs(norm - 1.0) > 1e-5:
            raise ValueError(f"direction weights must be unit norm, got {norm}")

    def vector(self, latent_dim: int) -> np.ndarray:
        v = np.zeros(latent_dim, dtype=np.float32)
        for d, w in zip(self.dims, self.weights):
            v[d] = w
        return v

    def negate(self) -> "PerturbDirection":
        return PerturbDirection(dims=self.dims,
                                weights=tuple(-w for w in self.weights))

    @classmethod
    def axis(cls, dim: int) -> "PerturbDirection":
        return cls(dims=(dim,), weights=(1.0,))

    @classmethod
    def uniform(cls, dims) -> "PerturbDirection":
        dims = tuple(int(d) for d in dims)
        w = 1.0 / np.sqrt(len(dims))
        return cls(dims=dims, weights=(float(w),) * len(dims))


def latent_kl_per_dim(vae, probe_images: np.ndarray) -> np.ndarray:
    """Mean per-dimension KL of the encoder posterior from the unit prior."""
    mu, logvar = vae.encode(probe_images, return_logvar=True)
    kl = 0.5 * (np.square(mu) + np.exp(logvar) - logvar - 1.0)
    return kl.mean(axis=0)


def select_perturb_dims(vae, probe_set, k: int = 1) -> PerturbDirection:
    """Top-k most active latent dimensions, ranked by per-dimension KL."""
    images = getattr(probe_set, "images", probe_set)
    kl = latent_kl_per_dim(vae, images)
    if k < 1 or k > kl.size:
        raise ValueError(f"k must lie in [1, {kl.size}], got {k}")
    if not np.all(np.isfinite(kl)) or kl.max() < 1e-9:
        raise DegenerateLatent("no latent dimension is active on the probe set")
    # stable sort on -kl breaks ties toward the lowest index
    ranked = np.argsort(-kl, kind="stable")[:k]
    return PerturbDirection.uniform(sorted(int(d) for d in ranked))
