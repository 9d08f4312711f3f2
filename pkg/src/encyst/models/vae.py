"""Variational autoencoder with a total-correlation penalty.

Encoder maps an image to a posterior mean and log-variance of length L;
decoder maps a latent vector back to pixel space (clamped to [0,1]). The
training objective is reconstruction error (perceptual by default, pixel
MSE as fallback) plus the KL regularizer plus a weighted total-correlation
penalty estimated by minibatch-weighted sampling.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..data import Dataset
from .classifier import TrainingDiverged
from .perceptual import PerceptualMetric

_LOG2PI = float(np.log(2.0 * np.pi))


@dataclass
class VaeConfig:
    latent_dim: int = 20
    hidden: int = 256
    tc_weight: float = 40.0
    kl_weight: float = 1.0
    epochs: int = 12
    lr: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    reconstruction: str = "perceptual"  # "perceptual" | "mse"


class TcBatchTooSmall(ValueError):
    pass


def tc_estimate(latent_batch: np.ndarray, mu: np.ndarray | None = None,
                logvar: np.ndarray | None = None) -> float:
    """Total correlation of a latent batch.

    With posterior statistics (``mu``, ``logvar``) this is the
    minibatch-weighted-sampling estimate; from bare samples it falls back to
    the Gaussian moment-matching form sum(log marginal std) - 0.5 log det cov.
    """
    z = np.asarray(latent_batch, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("latent batch must be 2-D (batch, dim)")
    n, d = z.shape
    if n < 16:
        raise TcBatchTooSmall(f"need at least 16 samples, got {n}")
    if d == 1:
        return 0.0
    if mu is not None and logvar is not None:
        lp = _log_qz_matrix(z, np.asarray(mu, float), np.asarray(logvar, float))
        log_qz = _logsumexp(lp.sum(axis=2), axis=1) - np.log(n * n)
        log_marg = (_logsumexp(lp, axis=1) - np.log(n * n)).sum(axis=1)
        return float(np.mean(log_qz - log_marg))
    cov = np.cov(z, rowvar=False)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ValueError("degenerate latent batch covariance")
    return float(0.5 * (np.sum(np.log(np.diag(cov))) - logdet))


def _log_qz_matrix(z, mu, logvar):
    diff = z[:, None, :] - mu[None, :, :]
    var = np.exp(logvar)[None, :, :]
    return -0.5 * (_LOG2PI + logvar[None, :, :] + diff * diff / var)


def _logsumexp(a, axis):
    m = a.max(axis=axis, keepdims=True)
    return (np.log(np.exp(a - m).sum(axis=axis, keepdims=True)) + m).squeeze(axis)


class VaeModel:
    """MLP encoder/decoder pair over flattened images."""

    def __init__(self, image_shape, config: VaeConfig | None = None):
        self.image_shape = tuple(image_shape)  # (C, H, W)
        self.config = config or VaeConfig()
        if self.config.tc_weight < 0:
            raise ValueError("tc_weight must be non-negative")
        self.latent_dim = self.config.latent_dim
        rng = np.random.default_rng(self.config.seed)
        flat = int(np.prod(self.image_shape))
        hid = self.config.hidden
        L = self.latent_dim

        def par(name, shape, scale):
            return ad.parameter(rng.normal(scale=scale, size=shape)
                                .astype(np.float32), name=name)

        self.params = {
            "enc_w1": par("enc_w1", (flat, hid), np.sqrt(2.0 / flat)),
            "enc_b1": ad.parameter(np.zeros(hid, np.float32), name="enc_b1"),
            "enc_wmu": par("enc_wmu", (hid, L), np.sqrt(1.0 / hid)),
            "enc_bmu": ad.parameter(np.zeros(L, np.float32), name="enc_bmu"),
            "enc_wlv": par("enc_wlv", (hid, L), np.sqrt(1.0 / hid)),
            "enc_blv": ad.parameter(np.zeros(L, np.float32), name="enc_blv"),
            "dec_w1": par("dec_w1", (L, hid), np.sqrt(1.0 / L)),
            "dec_b1": ad.parameter(np.zeros(hid, np.float32), name="dec_b1"),
            "dec_w2": par("dec_w2", (hid, flat), np.sqrt(2.0 / hid)),
            "dec_b2": ad.parameter(np.zeros(flat, np.float32), name="dec_b2"),
        }
        self._lock = threading.Lock()
        self._build_inference_graphs()

    # -- graph pieces ------------------------------------------------------
    def _encode_nodes(self, xflat):
        p = self.params
        h = ad.relu(ad.matmul(xflat, p["enc_w1"]) + p["enc_b1"])
        mu = ad.matmul(h, p["enc_wmu"]) + p["enc_bmu"]
        logvar = ad.matmul(h, p["enc_wlv"]) + p["enc_blv"]
        return mu, logvar

    def _decode_nodes(self, z):
        p = self.params
        h = ad.relu(ad.matmul(z, p["dec_w1"]) + p["dec_b1"])
        return ad.sigmoid(ad.matmul(h, p["dec_w2"]) + p["dec_b2"])

    def _build_inference_graphs(self):
        x = ad.placeholder("x")
        flat = ad.reshape(x, (-1, int(np.prod(self.image_shape))))
        mu, logvar = self._encode_nodes(flat)
        self._enc_graph = ad.Graph([mu, logvar], inputs=[x])
        z = ad.placeholder("z")
        self._dec_graph = ad.Graph(self._decode_nodes(z), inputs=[z])

    # -- public api --------------------------------------------------------
    def encode(self, images: np.ndarray, return_logvar=False):
        """Posterior mean path: deterministic, no sampling."""
        images = np.asarray(images, dtype=np.float32)
        if images.ndim == 3:
            images = images[None]
        mu, logvar = self._enc_graph.forward(images)
        return (mu, logvar) if return_logvar else mu

    def decode(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float32)
        single = z.ndim == 1
        if single:
            z = z[None]
        flat = self._dec_graph.forward(z)
        imgs = np.clip(flat.reshape(-1, *self.image_shape), 0.0, 1.0)
        return imgs[0] if single else imgs

    def reconstruction_mse(self, images: np.ndarray) -> float:
        recon = self.decode(self.encode(images))
        return float(np.mean((recon - np.asarray(images, np.float32)) ** 2))

    def latent_stats(self, images: np.ndarray):
        """Per-dimension mean/std of posterior means over a probe set."""
        mu = self.encode(images)
        return mu.mean(axis=0), mu.std(axis=0)

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        for k, v in self.params.items():
            v.data = np.asarray(state[k], np.float32).reshape(v.data.shape)

    # -- training ----------------------------------------------------------
    def _build_training_graph(self, metric: PerceptualMetric | None):
        cfg = self.config
        B, L = cfg.batch_size, self.latent_dim
        flatdim = int(np.prod(self.image_shape))
        x = ad.placeholder("x")
        eps = ad.placeholder("eps")
        xflat = ad.reshape(x, (B, flatdim))
        mu, logvar = self._encode_nodes(xflat)
        std = ad.exp(ad.mul(logvar, ad.Tensor(0.5)))
        z = ad.add(mu, ad.mul(std, eps))
        xrec = self._decode_nodes(z)

        if cfg.reconstruction == "perceptual":
            ra = ad.reshape(xrec, (B, *self.image_shape))
            rb = ad.reshape(xflat, (B, *self.image_shape))
            recon = ad.tmean(metric.distance_node(ra, rb)) * float(flatdim)
        else:
            recon = ad.tmean(ad.tsum(ad.square(ad.sub(xrec, xflat)), axis=1))

        kl = ad.tmean(ad.tsum(
            ad.mul(ad.Tensor(-0.5),
                   1.0 + logvar - ad.square(mu) - ad.exp(logvar)), axis=1))

        # minibatch-weighted-sampling total correlation
        zr = ad.reshape(z, (B, 1, L))
        mur = ad.reshape(mu, (1, B, L))
        lvr = ad.reshape(logvar, (1, B, L))
        diff = ad.sub(zr, mur)
        logprob = ad.mul(ad.Tensor(-0.5),
                         _LOG2PI + lvr + ad.div(ad.square(diff), ad.exp(lvr)))
        log_qz = ad.logsumexp(ad.tsum(logprob, axis=2), axis=1)
        log_marg = ad.tsum(ad.logsumexp(logprob, axis=1), axis=1)
        tc = ad.tmean(ad.sub(log_qz, log_marg))

        loss = recon + cfg.kl_weight * kl + cfg.tc_weight * tc
        return ad.Graph([loss, recon, kl, tc], inputs=[x, eps])


def train_vae(autoencoder_set: Dataset, config: VaeConfig | None = None,
              metric: PerceptualMetric | None = None,
              progress=None) -> VaeModel:
    """Train a VAE on the autoencoder split; deterministic per seed."""
    config = config or VaeConfig()
    vae = VaeModel(autoencoder_set.images.shape[1:], config)
    if config.reconstruction == "perceptual" and metric is None:
        metric = PerceptualMetric(vae.image_shape, seed=config.seed)
    graph = vae._build_training_graph(metric)
    opt = ad.Adam(vae.params.values(), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    n = len(autoencoder_set)
    B = config.batch_size
    if n < B:
        raise ValueError(f"autoencoder split ({n}) smaller than batch size {B}")
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        usable = (n // B) * B
        for start in range(0, usable, B):
            idx = order[start:start + B]
            eps = rng.standard_normal((B, config.latent_dim)).astype(np.float32)
            loss, *_ = graph.forward(autoencoder_set.images[idx], eps)
            if not np.isfinite(loss):
                raise TrainingDiverged(step)
            opt.zero_grad()
            graph.backward(0)
            opt.step()
            step += 1
        if progress is not None:
            progress(epoch, float(loss))
    return vae


class IdentityVae:
    """Test double: encode flattens, decode reshapes; exact round-trip."""

    def __init__(self, image_shape):
        self.image_shape = tuple(image_shape)
        self.latent_dim = int(np.prod(image_shape))

    def encode(self, images, return_logvar=False):
        images = np.asarray(images, dtype=np.float32)
        if images.ndim == 3:
            images = images[None]
        mu = images.reshape(images.shape[0], -1)
        if return_logvar:
            return mu, np.zeros_like(mu)
        return mu

    def decode(self, z):
        z = np.asarray(z, dtype=np.float32)
        single = z.ndim == 1
        if single:
            z = z[None]
        imgs = z.reshape(-1, *self.image_shape)
        return imgs[0] if single else imgs
