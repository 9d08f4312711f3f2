from .dataset import Dataset, SplitSpec, SplitError, split
from .idx import (
    BadMagic,
    CountMismatch,
    IdxError,
    Truncated,
    image_from_idx_bytes,
    image_to_idx_bytes,
    load_idx,
    save_idx,
)
from .synth import render_digits, synth_blobs

import os


def load_mnist_dir(directory, train=True):
    """Load MNIST IDX files from a directory (standard file names)."""
    prefix = "train" if train else "t10k"
    return load_idx(
        os.path.join(directory, f"{prefix}-images-idx3-ubyte"),
        os.path.join(directory, f"{prefix}-labels-idx1-ubyte"),
    )


def mnist_available(directory=None):
    directory = directory or os.environ.get("ENCYST_MNIST_DIR", "data/mnist")
    return all(
        os.path.exists(os.path.join(directory, f))
        for f in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                  "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"))
