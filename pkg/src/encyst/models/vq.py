"""Single-scale vector quantization with an EMA-updated codebook."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad


class EmptyCodebook(ValueError):
    pass


@dataclass
class VqCodebook:
    entries: np.ndarray  # (K, D)
    beta: float = 0.25
    ema_decay: float = 0.99
    ema_counts: np.ndarray = field(default=None)
    ema_sums: np.ndarray = field(default=None)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float32)
        if self.entries.ndim != 2 or self.entries.shape[0] < 2:
            raise EmptyCodebook("codebook needs at least 2 entries")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("codebook entries must be finite")
        if self.ema_counts is None:
            self.ema_counts = np.zeros(self.K, dtype=np.float64)
        if self.ema_sums is None:
            self.ema_sums = self.entries.astype(np.float64).copy()

    @property
    def K(self):
        return self.entries.shape[0]

    @property
    def D(self):
        return self.entries.shape[1]

    @classmethod
    def random(cls, K, D, beta=0.25, seed=0):
        rng = np.random.default_rng(seed)
        return cls(entries=rng.normal(size=(K, D)).astype(np.float32), beta=beta)


def vq_quantize(z_e: np.ndarray, codebook: VqCodebook, training=False):
    """Nearest-entry quantization; EMA codebook update only in training mode."""
    z = np.asarray(z_e, dtype=np.float32)
    single = z.ndim == 1
    if single:
        z = z[None]
    if z.shape[-1] != codebook.D:
        raise ValueError(f"vector dim {z.shape[-1]} != codebook D {codebook.D}")
    d2 = ((z[:, None, :] - codebook.entries[None]) ** 2).sum(axis=2)
    indices = d2.argmin(axis=1)
    z_q = codebook.entries[indices]
    if training:
        _ema_update(codebook, z, indices)
    if single:
        return int(indices[0]), z_q[0]
    return indices, z_q


def _ema_update(cb: VqCodebook, z, indices, eps=1e-5):
    onehot = np.eye(cb.K)[indices]
    counts = onehot.sum(axis=0)
    sums = onehot.T @ z.astype(np.float64)
    cb.ema_counts = cb.ema_decay * cb.ema_counts + (1 - cb.ema_decay) * counts
    cb.ema_sums = cb.ema_decay * cb.ema_sums + (1 - cb.ema_decay) * sums
    n = cb.ema_counts.sum()
    stable = (cb.ema_counts + eps) / (n + cb.K * eps) * n
    cb.entries = (cb.ema_sums / stable[:, None]).astype(np.float32)


def vq_straight_through(z_e: ad.Tensor, codebook: VqCodebook) -> ad.Tensor:
    """Graph op: forward quantizes, backward copies gradients through."""
    def fwd(z):
        _, z_q = vq_quantize(z, codebook)
        return z_q
    return ad.tensor._node("vq_straight_through", (z_e,), fwd,
                           lambda g, out, z: (g,))


def vq_loss(x, x_recon, z_e, z_q, beta=0.25, dist_fn=None) -> float:
    """Reconstruction + codebook + commitment terms.

    ``dist_fn(x, x_recon)`` defaults to pixel MSE; the middle term trains the
    codebook (redundant when EMA updates are active) and the last, weighted by
    ``beta``, is the commitment loss. Stop-gradients are implicit here because
    the terms are evaluated on detached arrays.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    x = np.asarray(x, dtype=np.float32)
    x_recon = np.asarray(x_recon, dtype=np.float32)
    z_e = np.asarray(z_e, dtype=np.float32)
    z_q = np.asarray(z_q, dtype=np.float32)
    rec = float(dist_fn(x, x_recon)) if dist_fn else float(np.mean((x - x_recon) ** 2))
    codebook_term = float(((z_e - z_q) ** 2).sum(axis=-1).mean())
    commit_term = float(((z_q - z_e) ** 2).sum(axis=-1).mean())
    return rec + codebook_term + beta * commit_term
