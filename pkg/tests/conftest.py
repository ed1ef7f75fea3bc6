"""Shared fixtures: offline datasets and MNIST discovery.

Real MNIST IDX files are not bundled. Tests that need them look in
$SNNMAP_MNIST_DIR, ./data/mnist, or ~/data/mnist and skip with an
explanation when absent; everything else runs on bundled/synthetic data.
"""

import os
from pathlib import Path

import numpy as np
import pytest

MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def find_mnist_dir():
    candidates = []
    env = os.environ.get("SNNMAP_MNIST_DIR")
    if env:
        candidates.append(Path(env))
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "mnist")
    candidates.append(Path.home() / "data" / "mnist")
    for cand in candidates:
        if all((cand / name).exists() for name in MNIST_FILES):
            return cand
    return None


@pytest.fixture(scope="session")
def mnist_dir():
    found = find_mnist_dir()
    if found is None:
        pytest.skip(
            "MNIST IDX files not available (no network in this environment); "
            "set SNNMAP_MNIST_DIR or place the four ubyte files under data/mnist/ "
            "to run the MNIST acceptance criteria"
        )
    return found


@pytest.fixture(scope="session")
def digits_data():
    """Bundled scikit-learn 8x8 digits, normalized to [0,1]: offline real data."""
    from sklearn.datasets import load_digits

    raw = load_digits()
    images = (raw.data / 16.0).astype(np.float64)
    labels = raw.target.astype(np.int64)
    return images, labels


@pytest.fixture(scope="session")
def digits_dataset(digits_data):
    from snnmap.data import Dataset

    images, labels = digits_data
    return Dataset(images=images, labels=labels, classes=10, name="digits")
