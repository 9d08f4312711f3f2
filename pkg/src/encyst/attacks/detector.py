"""Adaptive-adversary probe: flag inputs with large autoencoder
reconstruction error."""

from __future__ import annotations

import numpy as np

from ..data import Dataset


class DegenerateCalibration(ValueError):
    pass


class ReconErrorDetector:
    """Flags images whose per-image reconstruction MSE exceeds a threshold."""

    def __init__(self, vae, threshold: float):
        self.vae = vae
        self.threshold = float(threshold)

    def errors(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float32)
        if images.ndim == 3:
            images = images[None]
        recon = self.vae.decode(self.vae.encode(images))
        return ((recon - images) ** 2).reshape(len(images), -1).mean(axis=1)

    def flags(self, images: np.ndarray) -> np.ndarray:
        return self.errors(images) > self.threshold

    def flag_rate(self, images: np.ndarray) -> float:
        return float(self.flags(images).mean())


def recon_error_detector(vae, calibration_set: Dataset | np.ndarray,
                         target_tpr: float = 0.5) -> ReconErrorDetector:
    """Threshold at the ``target_tpr`` quantile of clean reconstruction errors."""
    if not 0.0 < target_tpr < 1.0:
        raise ValueError(f"target_tpr must lie in (0,1), got {target_tpr}")
    images = (calibration_set.images if isinstance(calibration_set, Dataset)
              else np.asarray(calibration_set, dtype=np.float32))
    if len(images) == 0:
        raise ValueError("calibration set is empty")
    det = ReconErrorDetector(vae, threshold=0.0)
    errs = det.errors(images)
    if np.ptp(errs) == 0:
        raise DegenerateCalibration("constant reconstruction errors")
    det.threshold = float(np.quantile(errs, target_tpr))
    return det


def uniform_noise_probes(images: np.ndarray, epsilon: float = 0.3,
                         seed: int = 0) -> np.ndarray:
    """Pixel-space probes: clean images plus uniform noise in [-eps, eps]."""
    rng = np.random.default_rng(seed)
    noisy = images + rng.uniform(-epsilon, epsilon, size=images.shape)
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)
