"""IDX (ubyte) image/label file reading and writing."""

from __future__ import annotations

import struct

import numpy as np

from .dataset import Dataset

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class BadMagic(IdxError):
    pass


class Truncated(IdxError):
    pass


class CountMismatch(IdxError):
    pass


def _read_images(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise Truncated(f"{path}: image header incomplete")
    magic, n, h, w = struct.unpack_from(">IIII", raw, 0)
    if magic != IMAGE_MAGIC:
        raise BadMagic(f"{path}: expected image magic {IMAGE_MAGIC:#010x}, got {magic:#010x}")
    if len(raw) - 16 < n * h * w:
        raise Truncated(f"{path}: expected {n * h * w} pixel bytes, got {len(raw) - 16}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=n * h * w, offset=16)
    return pixels.reshape(n, 1, h, w).astype(np.float32) / 255.0


def _read_labels(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise Truncated(f"{path}: label header incomplete")
    magic, n = struct.unpack_from(">II", raw, 0)
    if magic != LABEL_MAGIC:
        raise BadMagic(f"{path}: expected label magic {LABEL_MAGIC:#010x}, got {magic:#010x}")
    if len(raw) - 8 < n:
        raise Truncated(f"{path}: expected {n} label bytes, got {len(raw) - 8}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair; pixels are scaled into [0, 1]."""
    images = _read_images(images_path)
    labels = _read_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(
            f"{images.shape[0]} images but {labels.shape[0]} labels")
    return Dataset(images=images, labels=labels,
                   num_classes=int(labels.max()) + 1 if labels.size else 0)


def save_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Write a dataset back out as an IDX pair (pixels quantized to uint8)."""
    imgs = np.clip(np.rint(dataset.images * 255.0), 0, 255).astype(np.uint8)
    n, c, h, w = imgs.shape
    if c != 1:
        raise IdxError("IDX export supports single-channel images only")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, h, w))
        f.write(imgs.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def image_to_idx_bytes(image: np.ndarray) -> bytes:
    """Serialize a single 1xHxW image as a one-image IDX payload."""
    img = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    if img.ndim == 2:
        img = img[None]
    c, h, w = img.shape
    if c != 1:
        raise IdxError("single-image payload must have one channel")
    return struct.pack(">IIII", IMAGE_MAGIC, 1, h, w) + img.tobytes()


def image_from_idx_bytes(payload: bytes) -> np.ndarray:
    if len(payload) < 16:
        raise Truncated("single-image payload header incomplete")
    magic, n, h, w = struct.unpack_from(">IIII", payload, 0)
    if magic != IMAGE_MAGIC:
        raise BadMagic(f"expected image magic, got {magic:#010x}")
    if n != 1:
        raise IdxError(f"expected one image, payload holds {n}")
    if len(payload) - 16 < h * w:
        raise Truncated("single-image payload pixels incomplete")
    px = np.frombuffer(payload, dtype=np.uint8, count=h * w, offset=16)
    return px.reshape(1, h, w).astype(np.float32) / 255.0
