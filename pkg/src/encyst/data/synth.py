"""Synthetic datasets: Gaussian blobs and rendered digit images.

The blob generator admits an analytic decision boundary, which the boundary
search tests use as an oracle. The rendered-digit corpus is a deterministic,
locally generated stand-in for handwritten-digit data: glyphs 0-9 drawn with
system fonts under random affine jitter at 28x28.
"""

from __future__ import annotations

import glob
import os

import numpy as np

from .dataset import Dataset

_FONT_DIRS = (
    "/usr/share/fonts/truetype/dejavu",
    "/usr/share/fonts/truetype",
    "/usr/local/share/fonts",
)


def synth_blobs(num_classes, dim, per_class, separation, seed) -> Dataset:
    """Gaussian clusters with unit variance, centers ``separation`` apart.

    Samples are affinely rescaled into [0,1]; images get shape (N,1,1,dim).
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if per_class < 1:
        raise ValueError("per_class must be at least 1")
    rng = np.random.default_rng(seed)
    if num_classes <= dim:
        centers = np.eye(num_classes, dim) * (separation / np.sqrt(2.0))
    else:
        d = rng.normal(size=(num_classes, dim))
        centers = d / np.linalg.norm(d, axis=1, keepdims=True) * separation
    pts = np.concatenate([
        centers[c] + rng.normal(size=(per_class, dim))
        for c in range(num_classes)
    ])
    labels = np.repeat(np.arange(num_classes), per_class)
    lo, hi = pts.min(), pts.max()
    pts = (pts - lo) / max(hi - lo, 1e-9)
    perm = rng.permutation(len(pts))
    images = pts[perm].astype(np.float32).reshape(-1, 1, 1, dim)
    return Dataset(images=images, labels=labels[perm], num_classes=num_classes)


def _find_fonts():
    found = []
    for d in _FONT_DIRS:
        found.extend(sorted(glob.glob(os.path.join(d, "**", "*.ttf"),
                                      recursive=True)))
    # dedupe by basename, keep stable order
    seen, fonts = set(), []
    for p in found:
        b = os.path.basename(p)
        if b not in seen:
            seen.add(b)
            fonts.append(p)
    if not fonts:
        raise RuntimeError("no TTF fonts found for digit rendering; "
                           "install DejaVu or point load_idx at real data")
    return fonts[:8]


def render_digits(n, seed, image_size=28) -> Dataset:
    """Deterministic rendered-digit dataset, labels balanced over 0-9."""
    from PIL import Image, ImageDraw, ImageFont
    from scipy.ndimage import affine_transform

    fonts = _find_fonts()
    rng = np.random.default_rng(seed)
    big = image_size * 2
    font_cache = {}
    images = np.empty((n, 1, image_size, image_size), dtype=np.float32)
    labels = rng.integers(0, 10, size=n)

    for i in range(n):
        digit = int(labels[i])
        fpath = fonts[rng.integers(len(fonts))]
        size = int(rng.integers(int(big * 0.58), int(big * 0.82)))
        key = (fpath, size)
        if key not in font_cache:
            font_cache[key] = ImageFont.truetype(fpath, size)
        font = font_cache[key]
        canvas = Image.new("L", (big, big), 0)
        draw = ImageDraw.Draw(canvas)
        l, t, r, b = draw.textbbox((0, 0), str(digit), font=font)
        x = (big - (r - l)) / 2 - l + rng.uniform(-3, 3)
        y = (big - (b - t)) / 2 - t + rng.uniform(-3, 3)
        draw.text((x, y), str(digit), fill=255, font=font)
        arr = np.asarray(canvas, dtype=np.float32) / 255.0

        theta = rng.uniform(-0.22, 0.22)
        shear = rng.uniform(-0.15, 0.15)
        scale = rng.uniform(0.9, 1.1)
        c, s = np.cos(theta), np.sin(theta)
        m = np.array([[c, -s], [s, c]]) @ np.array([[1.0, shear], [0.0, 1.0]]) / scale
        center = (big - 1) / 2.0
        offset = center - m @ np.array([center, center])
        arr = affine_transform(arr, m, offset=offset, order=1, mode="constant")

        img = Image.fromarray(np.clip(arr * 255, 0, 255).astype(np.uint8))
        img = img.resize((image_size, image_size), Image.BILINEAR)
        images[i, 0] = np.asarray(img, dtype=np.float32) / 255.0

    return Dataset(images=images, labels=labels.astype(np.int64), num_classes=10)
