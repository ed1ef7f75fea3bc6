"""Dataset ingestion: MNIST-style IDX, CIFAR-10 binary, synthetic rates.

Pixels are normalized to [0,1] on load (divide by 255) so they can act
directly as spike probabilities for the Poisson encoder. Loaders validate
headers before touching bulk data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import load_container, save_container
from .util import subrng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3*32*32 channel-planar pixels


class DataFormatError(ValueError):
    """Malformed dataset file."""


@dataclass
class Dataset:
    images: np.ndarray  # [N, *geometry], float64 in [0,1]
    labels: np.ndarray  # [N], int64 in [0, classes)
    classes: int
    name: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DataFormatError(
                f"{self.name}: {len(self.images)} images vs {len(self.labels)} labels"
            )
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataFormatError(f"{self.name}: image values outside [0,1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise DataFormatError(f"{self.name}: labels outside [0, {self.classes})")

    def __len__(self):
        return len(self.images)

    @property
    def geometry(self):
        return self.images.shape[1:]


def _read_idx_header(blob, path, expected_magic, ndim):
    if len(blob) < 4 * (1 + ndim):
        raise DataFormatError(f"{path}: truncated IDX header")
    magic = struct.unpack_from(">I", blob, 0)[0]
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    return dims, 4 * (1 + ndim)


def load_idx(images_path, labels_path, classes=10, name="idx") -> Dataset:
    """Parse the big-endian IDX pair used to distribute MNIST."""
    img_blob = Path(images_path).read_bytes()
    lbl_blob = Path(labels_path).read_bytes()
    (n, rows, cols), img_off = _read_idx_header(img_blob, images_path, IDX_IMAGES_MAGIC, 3)
    (n_lbl,), lbl_off = _read_idx_header(lbl_blob, labels_path, IDX_LABELS_MAGIC, 1)
    if n != n_lbl:
        raise DataFormatError(f"{images_path}: {n} images but {n_lbl} labels")
    if len(img_blob) - img_off < n * rows * cols:
        raise DataFormatError(f"{images_path}: truncated image payload")
    if len(lbl_blob) - lbl_off < n:
        raise DataFormatError(f"{labels_path}: truncated label payload")
    pixels = np.frombuffer(img_blob, dtype=np.uint8, count=n * rows * cols, offset=img_off)
    images = pixels.reshape(n, rows, cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lbl_blob, dtype=np.uint8, count=n, offset=lbl_off).astype(np.int64)
    if labels.size and labels.max() >= classes:
        raise DataFormatError(f"{labels_path}: label {labels.max()} outside [0, {classes})")
    return Dataset(images=images, labels=labels, classes=classes, name=name)


def load_cifar10_binary(paths, name="cifar10") -> Dataset:
    """Parse CIFAR-10 batch files (3073-byte records, channel-planar RGB)."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    all_images, all_labels = [], []
    for path in paths:
        blob = Path(path).read_bytes()
        if len(blob) == 0 or len(blob) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: size {len(blob)} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels = records[:, 0].astype(np.int64)
        if labels.max() > 9:
            raise DataFormatError(f"{path}: label byte {labels.max()} outside [0, 10)")
        images = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
        all_images.append(images)
        all_labels.append(labels)
    return Dataset(
        images=np.concatenate(all_images),
        labels=np.concatenate(all_labels),
        classes=10,
        name=name,
    )


def synthetic_rates(classes, per_class, geometry, separation, seed, jitter=0.05) -> Dataset:
    """Class-conditional mean-intensity images with Gaussian pixel jitter.

    Each class gets a fixed random intensity pattern scaled by
    ``separation``; samples add pixel noise and clamp to [0,1]. With large
    separation the classes are linearly separable in rate space; with
    separation 0 they are indistinguishable.
    """
    if separation < 0:
        raise ValueError(f"separation must be >= 0, got {separation}")
    geometry = tuple(int(g) for g in geometry)
    rng_pat = subrng(seed, "centroids")
    centroids = np.clip(
        0.5 + separation * rng_pat.uniform(-0.5, 0.5, size=(classes,) + geometry), 0.0, 1.0
    )
    images = np.empty((classes * per_class,) + geometry)
    labels = np.empty(classes * per_class, dtype=np.int64)
    rng_noise = subrng(seed, "jitter")
    for c in range(classes):
        lo = c * per_class
        noise = rng_noise.normal(0.0, jitter, size=(per_class,) + geometry)
        images[lo : lo + per_class] = np.clip(centroids[c] + noise, 0.0, 1.0)
        labels[lo : lo + per_class] = c
    order = subrng(seed, "shuffle").permutation(len(images))
    return Dataset(images=images[order], labels=labels[order], classes=classes, name="synthetic")


def subsample(dataset, n, seed, stratified=False) -> Dataset:
    """Deterministic subset; stratified draws n/classes per class."""
    if n > len(dataset):
        raise ValueError(f"cannot subsample {n} from {len(dataset)} samples")
    rng = subrng(seed, "subsample")
    if stratified:
        if n % dataset.classes != 0:
            raise ValueError(f"stratified subsample needs n divisible by {dataset.classes}")
        per = n // dataset.classes
        chosen = []
        for c in range(dataset.classes):
            idx = np.flatnonzero(dataset.labels == c)
            if len(idx) < per:
                raise ValueError(f"class {c} has only {len(idx)} samples, need {per}")
            chosen.append(rng.choice(idx, size=per, replace=False))
        picks = np.sort(np.concatenate(chosen))
    else:
        picks = np.sort(rng.choice(len(dataset), size=n, replace=False))
    return Dataset(
        images=dataset.images[picks].copy(),
        labels=dataset.labels[picks].copy(),
        classes=dataset.classes,
        name=dataset.name,
    )


def save_dataset(dataset, path):
    save_container(
        path,
        {"kind": "dataset", "classes": dataset.classes, "name": dataset.name},
        {"images": dataset.images, "labels": dataset.labels},
    )


def load_dataset(path) -> Dataset:
    meta, arrays = load_container(path)
    if meta.get("kind") != "dataset":
        raise DataFormatError(f"{path}: container does not hold a dataset")
    return Dataset(
        images=arrays["images"], labels=arrays["labels"],
        classes=meta["classes"], name=meta.get("name", ""),
    )
