"""End-to-end fingerprint pool construction and boosting."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from ..models import ModelHandle, PerceptualMetric
from .boundary import (BoundarySearchConfig, NoBoundaryFound, NoiseDistribution,
                       find_boundary_mu_bisect, find_boundary_mu_nes)
from .direction import PerturbDirection, select_perturb_dims
from .filtering import adaptive_threshold, filter_smooth
from .generate import (EncystedSample, FilterExhausted, generate_encysted,
                       pick_one)
from .pool import FingerprintPair, FingerprintPool


def quantize(image: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid used by the wire payload, so stored labels
    match what a verifier's query will produce."""
    return (np.round(np.asarray(image, np.float32) * 255.0) / 255.0).astype(
        np.float32)


class PoolBuilder:
    """Holds the licensed handle, VAE, references, and search settings needed
    to mint fingerprint pairs, both initially and for boosting."""

    def __init__(self, handle: ModelHandle, vae, references: Dataset,
                 metric: PerceptualMetric | None = None,
                 search_config: BoundarySearchConfig | None = None,
                 sigma: float = 0.05, k_dims: int = 1, i_prime: int = 50,
                 retries: int = 3, method: str = "nes", seed: int = 0,
                 use_filter: bool = True):
        if method not in ("nes", "bisect"):
            raise ValueError(f"unknown boundary method {method!r}")
        self.handle = handle
        self.vae = vae
        self.references = references
        self.metric = metric or PerceptualMetric(references.images.shape[1:],
                                                 seed=seed)
        self.sigma = sigma
        self.i_prime = i_prime
        self.retries = retries
        self.method = method
        self.seed = seed
        self.use_filter = use_filter
        self.rng = np.random.default_rng(seed)

        ref_labels = np.asarray(handle.predict_top1(references.images))
        self.ref_labels = ref_labels
        self.refs_by_class = {
            int(c): references.images[ref_labels == c]
            for c in np.unique(ref_labels)
            if int((ref_labels == c).sum()) >= 2}
        self.xi = adaptive_threshold(self.refs_by_class, self.metric)

        self.direction = select_perturb_dims(vae, references.images, k=k_dims)
        if search_config is None:
            # decision crossings sit well beyond the latent std of a
            # TC-compressed dimension, so span generously
            mu_probe = vae.encode(references.images)
            spread = float(mu_probe[:, self.direction.dims[0]].std())
            delta_max = max(10.0 * spread, 5.0)
            search_config = BoundarySearchConfig(
                delta_max=delta_max, oracle_grid_step=delta_max / 50.0)
        self.search_config = search_config
        # per (reference, dims): boundary scale and the signed direction it
        # was found along (the crossing may lie either way along the axis)
        self._mu_cache: dict[tuple[int, tuple[int, ...]],
                             tuple[float, PerturbDirection]] = {}

    # -- internals ---------------------------------------------------------
    def _smooth_filter(self):
        if not self.use_filter:
            return None
        return lambda img: filter_smooth(quantize(img), self.xi,
                                         self.refs_by_class, self.handle,
                                         self.metric)

    def _search_one_way(self, z, direction: PerturbDirection) -> float:
        if self.method == "bisect":
            return find_boundary_mu_bisect(self.handle, self.vae, z,
                                           direction, self.search_config)
        return find_boundary_mu_nes(self.handle, self.vae, z, direction,
                                    self.search_config,
                                    seed=int(self.rng.integers(2**31)))

    def boundary_mu(self, ref_idx: int,
                    direction: PerturbDirection | None = None
                    ) -> tuple[float, PerturbDirection]:
        """Boundary scale for one reference, plus the signed direction the
        crossing was found along (either way along the chosen axis)."""
        direction = direction or self.direction
        key = (ref_idx, direction.dims)
        if key not in self._mu_cache:
            z = self.vae.encode(self.references.images[ref_idx])[0]
            try:
                mu = self._search_one_way(z, direction)
            except NoBoundaryFound:
                direction = direction.negate()
                mu = self._search_one_way(z, direction)
            self._mu_cache[key] = (mu, direction)
        return self._mu_cache[key]

    def mint_pair(self, ref_idx: int,
                  direction: PerturbDirection | None = None,
                  noise: str = "normal") -> FingerprintPair:
        """One fingerprint pair from one reference; raises on failure."""
        mu, direction = self.boundary_mu(ref_idx, direction or self.direction)
        dist = NoiseDistribution(mu=mu, sigma=self.sigma)
        if noise == "uniform":
            samples = self._generate_uniform(ref_idx, direction, dist)
        else:
            samples = generate_encysted(
                self.handle, self.vae, self.references.images[ref_idx],
                direction, dist, smooth_filter=self._smooth_filter(),
                i_prime=self.i_prime, origin=ref_idx, rng=self.rng)
        sample = pick_one(samples, self.rng)
        image = quantize(sample.image)
        label = int(self.handle.predict_top1(image)[0])
        return FingerprintPair(image=image, expected_label=label,
                               origin=ref_idx, noise=sample.noise,
                               side=sample.side, mu=mu, sigma=self.sigma)

    def _generate_uniform(self, ref_idx, direction, dist):
        """Extended-distribution boosting: uniform draws on [mu-s, mu+s]."""
        z = self.vae.encode(self.references.images[ref_idx])[0]
        dvec = direction.vector(len(z))
        base = int(self.handle.predict_top1(self.vae.decode(z))[0])
        smooth = self._smooth_filter()
        out = []
        for delta in self.rng.uniform(dist.mu - dist.sigma,
                                      dist.mu + dist.sigma, self.i_prime):
            img = self.vae.decode(z + np.float32(delta) * dvec)
            if smooth is not None and not smooth(img):
                continue
            label = int(self.handle.predict_top1(img)[0])
            out.append(EncystedSample(image=img, origin=ref_idx,
                                      noise=float(delta),
                                      side="inner" if label == base else "outer",
                                      label=label))
        if not out:
            raise FilterExhausted(f"uniform candidates all rejected "
                                  f"for reference {ref_idx}")
        return out

    def _mint_with_retries(self, ref_indices, count: int, direction=None,
                           noise: str = "normal") -> list[FingerprintPair]:
        pairs = []
        failures = 0
        idx_cycle = list(ref_indices)
        pos = 0
        while len(pairs) < count:
            if failures >= self.retries * count + len(idx_cycle):
                raise FilterExhausted(
                    f"could not mint {count} pairs "
                    f"({len(pairs)} minted, {failures} failed attempts)")
            ref_idx = idx_cycle[pos % len(idx_cycle)]
            pos += 1
            try:
                pairs.append(self.mint_pair(ref_idx, direction, noise))
            except (NoBoundaryFound, FilterExhausted):
                failures += 1
        return pairs

    # -- public api --------------------------------------------------------
    def build(self, count: int, model_hash: str = "") -> FingerprintPool:
        order = self.rng.permutation(len(self.references))
        pairs = self._mint_with_retries(order, count)
        return FingerprintPool(pairs, model_hash=model_hash)


def grow_pool(pool: FingerprintPool, strategy: str, count: int,
              builder: PoolBuilder) -> FingerprintPool:
    """Add ``count`` pairs via the named boosting strategy."""
    order = builder.rng.permutation(len(builder.references))
    if strategy == "resample":
        used = sorted({p.origin for p in pool.pairs})
        refs = used or list(order)
        pairs = builder._mint_with_retries(refs, count)
    elif strategy == "new-reference":
        used = {p.origin for p in pool.pairs}
        fresh = [i for i in order if i not in used]
        pairs = builder._mint_with_retries(fresh or list(order), count)
    elif strategy == "n-code":
        k = min(2, len(builder.direction.dims) + 1)
        direction = select_perturb_dims(builder.vae,
                                        builder.references.images, k=k)
        pairs = builder._mint_with_retries(order, count, direction=direction)
    elif strategy == "uniform-distribution":
        pairs = builder._mint_with_retries(order, count, noise="uniform")
    else:
        raise ValueError(f"unknown boosting strategy {strategy!r}")
    pool.add(pairs)
    return pool
