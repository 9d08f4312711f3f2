"""Boundary-scale search along a latent direction.

Three search modes over the scalar noise scale delta applied along a
perturbation direction: an oracle grid-scan-plus-bisection, a black-box
score-function (NES-style) search, and a substitutive variant that looks
for the smallest scale where a model and its modified copy disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..models import ModelHandle


class NoBoundaryFound(RuntimeError):
    """No label flip within [0, delta_max] along the direction."""


class NoDisagreementFound(RuntimeError):
    """The substitutive pair never disagrees within [0, delta_max]."""


@dataclass
class NoiseDistribution:
    """Noise scale distribution N(mu, sigma^2); mu sits on the boundary."""

    mu: float
    sigma: float = 0.05

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return rng.normal(self.mu, self.sigma, size=n)


@dataclass
class BoundarySearchConfig:
    delta_max: float = 3.0
    nes_population: int = 20
    nes_alpha: float = 0.05
    nes_sigma: float = 0.1
    max_iters: int = 100
    oracle_grid_step: float = 0.05
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.delta_max <= 0:
            raise ValueError("delta_max must be positive")
        if self.nes_population < 2 or self.nes_population % 2:
            raise ValueError("nes_population must be even and >= 2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def _decode_at(vae, z: np.ndarray, direction_vec: np.ndarray,
               delta: float) -> np.ndarray:
    return vae.decode(z + np.float32(delta) * direction_vec)


def _label_at(handle: ModelHandle, vae, z, direction_vec, delta) -> int:
    img = _decode_at(vae, z, direction_vec, delta)
    return int(handle.predict_top1(img)[0])


def flip_loss(handle: ModelHandle, vae, z: np.ndarray, delta: float,
              direction, base_label: int | None = None) -> float:
    """Hinge on the log-probability margin of the unperturbed label.

    Zero exactly when the prediction has flipped away from the base label.
    With a black-box handle the margin is unavailable and the loss
    degenerates to a 0/1 flip indicator.
    """
    dvec = direction.vector(len(z)) if hasattr(direction, "vector") else direction
    if base_label is None:
        base_label = _label_at(handle, vae, z, dvec, 0.0)
    img = _decode_at(vae, z, dvec, delta)
    if handle.access == "white-box":
        logp = np.log(np.clip(handle.predict_proba(img)[0], 1e-12, None))
        others = np.delete(logp, base_label)
        return float(max(0.0, logp[base_label] - others.max()))
    return 1.0 if int(handle.predict_top1(img)[0]) == base_label else 0.0


def _bisect(label_fn, lo: float, hi: float, base_label: int,
            tolerance: float) -> float:
    """Shrink [lo, hi] with label(lo) == base and label(hi) != base."""
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if label_fn(mid) == base_label:
            lo = mid
        else:
            hi = mid
    return hi


def find_boundary_mu_bisect(handle: ModelHandle, vae, z: np.ndarray,
                            direction, config: BoundarySearchConfig | None = None
                            ) -> float:
    """Grid-scan for the first flip along +direction, then bisect."""
    config = config or BoundarySearchConfig()
    dvec = direction.vector(len(z)) if hasattr(direction, "vector") else direction
    label_fn = lambda d: _label_at(handle, vae, z, dvec, d)
    base = label_fn(0.0)
    step = config.oracle_grid_step
    lo = 0.0
    delta = step
    while delta <= config.delta_max + 1e-12:
        if label_fn(delta) != base:
            return _bisect(label_fn, lo, delta, base, config.tolerance)
        lo = delta
        delta += step
    raise NoBoundaryFound(
        f"no flip within delta_max={config.delta_max} along direction")


def find_boundary_mu_nes(handle: ModelHandle, vae, z: np.ndarray,
                         direction, config: BoundarySearchConfig | None = None,
                         seed: int = 0, return_iters: bool = False):
    """Score-function search for the flip scale using only top-1 queries.

    Samples antithetic noise around the current mu, estimates the gradient
    of the expected flip loss, and steps mu downhill; once a flipped sample
    is observed the crossing is refined by bisection. The search std widens
    when the sample cloud sees no signal.
    """
    config = config or BoundarySearchConfig()
    dvec = direction.vector(len(z)) if hasattr(direction, "vector") else direction
    label_fn = lambda d: _label_at(handle, vae, z, dvec, d)
    base = label_fn(0.0)
    loss_fn = lambda d: 1.0 if label_fn(d) == base else 0.0

    rng = np.random.default_rng(seed)
    mu = 0.5 * config.delta_max
    sigma = config.nes_sigma
    half = config.nes_population // 2
    best_hi = None   # smallest flipped scale seen
    best_lo = 0.0    # largest unflipped scale below best_hi
    iters = 0
    for iters in range(1, config.max_iters + 1):
        eps = rng.standard_normal(half)
        deltas = np.concatenate([mu + sigma * eps, mu - sigma * eps])
        deltas = np.clip(deltas, 0.0, config.delta_max)
        losses = np.array([loss_fn(d) for d in deltas])
        flipped = deltas[losses == 0.0]
        if flipped.size:
            best_hi = float(flipped.min()) if best_hi is None else min(
                best_hi, float(flipped.min()))
        if best_hi is not None:
            unflipped = deltas[(losses > 0.0) & (deltas < best_hi)]
            if unflipped.size:
                best_lo = max(best_lo, float(unflipped.max()))
            break
        grad = float(np.mean(losses * np.concatenate([eps, -eps]))) / sigma
        if grad == 0.0:
            # flat loss plateau: widen the search cloud instead of stalling
            sigma = min(2.0 * sigma, config.delta_max)
        else:
            mu = float(np.clip(mu - config.nes_alpha * grad, 0.0,
                               config.delta_max))
    if best_hi is None:
        raise NoBoundaryFound(
            f"no flip within {config.max_iters} search iterations")
    mu = _bisect(label_fn, best_lo, best_hi, base, config.tolerance)
    return (mu, iters) if return_iters else mu


def find_boundary_mu_substitutive(m: ModelHandle, m_attacked: ModelHandle,
                                  vae, z: np.ndarray, direction,
                                  config: BoundarySearchConfig | None = None
                                  ) -> float:
    """Smallest scale where the substitutive pair disagrees while the
    unmodified substitute still keeps its unperturbed label."""
    config = config or BoundarySearchConfig()
    dvec = direction.vector(len(z)) if hasattr(direction, "vector") else direction

    def labels(d):
        img = _decode_at(vae, z, dvec, d)
        return int(m.predict_top1(img)[0]), int(m_attacked.predict_top1(img)[0])

    base, base_att = labels(0.0)
    if base != base_att:
        return 0.0
    predicate = lambda d: (lambda a, b: a == base and a != b)(*labels(d))
    step = config.oracle_grid_step
    lo = 0.0
    delta = step
    while delta <= config.delta_max + 1e-12:
        if predicate(delta):
            while delta - lo > config.tolerance:
                mid = 0.5 * (lo + delta)
                if predicate(mid):
                    delta = mid
                else:
                    lo = mid
            return delta
        lo = delta
        delta += step
    raise NoDisagreementFound(
        f"models agree everywhere within delta_max={config.delta_max}")
