import struct

import numpy as np
import pytest

from snnmap.container import ContainerError, load_container, save_container
from snnmap.data import (
    CIFAR_RECORD_BYTES,
    DataFormatError,
    Dataset,
    load_cifar10_binary,
    load_dataset,
    load_idx,
    save_dataset,
    subsample,
    synthetic_rates,
)


def write_idx_pair(tmp_path, pixels, labels):
    """Craft a well-formed IDX image/label file pair; returns the two paths."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    img = tmp_path / "images-idx3-ubyte"
    lbl = tmp_path / "labels-idx1-ubyte"
    img.write_bytes(struct.pack(">IIII", 0x00000803, n, rows, cols) + pixels.tobytes())
    lbl.write_bytes(struct.pack(">II", 0x00000801, n) + labels.tobytes())
    return img, lbl


class TestIdx:
    def test_crafted_fixture_parses_to_exact_pixels(self, tmp_path):
        pixels = np.array(
            [[[0, 255], [51, 102]], [[255, 0], [204, 153]]], dtype=np.uint8
        )
        img, lbl = write_idx_pair(tmp_path, pixels, [3, 9])
        ds = load_idx(img, lbl)
        assert len(ds) == 2
        assert np.array_equal(ds.images, pixels.astype(np.float64) / 255.0)
        assert np.array_equal(ds.labels, [3, 9])

    def test_empty_count_is_valid(self, tmp_path):
        img, lbl = write_idx_pair(tmp_path, np.zeros((0, 2, 2), dtype=np.uint8), [])
        ds = load_idx(img, lbl)
        assert len(ds) == 0

    def test_label_nine_maps_to_class_nine(self, tmp_path):
        img, lbl = write_idx_pair(tmp_path, np.zeros((1, 1, 1), dtype=np.uint8), [9])
        assert load_idx(img, lbl).labels[0] == 9

    def test_bad_magic_rejected_before_payload(self, tmp_path):
        img, lbl = write_idx_pair(tmp_path, np.zeros((1, 2, 2), dtype=np.uint8), [0])
        raw = bytearray(img.read_bytes())
        raw[3] = 0x42
        img.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError, match="magic"):
            load_idx(img, lbl)

    def test_truncated_payload(self, tmp_path):
        img, lbl = write_idx_pair(tmp_path, np.zeros((2, 3, 3), dtype=np.uint8), [0, 1])
        img.write_bytes(img.read_bytes()[:-5])
        with pytest.raises(DataFormatError, match="truncated"):
            load_idx(img, lbl)

    def test_count_mismatch(self, tmp_path):
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        dir_a.mkdir()
        dir_b.mkdir()
        img, _ = write_idx_pair(dir_a, np.zeros((2, 2, 2), dtype=np.uint8), [0, 1])
        _, lbl = write_idx_pair(dir_b, np.zeros((3, 2, 2), dtype=np.uint8), [0, 1, 2])
        with pytest.raises(DataFormatError, match="images but"):
            load_idx(img, lbl)


def write_cifar_file(path, labels, pixel_fill=None, pixels=None):
    records = []
    for i, label in enumerate(labels):
        if pixels is not None:
            body = pixels[i]
        else:
            body = np.full(3072, pixel_fill if pixel_fill is not None else 0, dtype=np.uint8)
        records.append(bytes([label]) + body.tobytes())
    path.write_bytes(b"".join(records))


class TestCifar:
    def test_single_record_exact(self, tmp_path):
        path = tmp_path / "batch.bin"
        body = np.arange(3072, dtype=np.uint8)
        write_cifar_file(path, [7], pixels=[body])
        ds = load_cifar10_binary(path)
        assert ds.labels[0] == 7
        assert ds.images.shape == (1, 3, 32, 32)
        assert np.array_equal(ds.images[0], body.reshape(3, 32, 32) / 255.0)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "batch.bin"
        path.write_bytes(b"\x00" * (CIFAR_RECORD_BYTES + 17))
        with pytest.raises(DataFormatError, match="multiple"):
            load_cifar10_binary(path)

    def test_label_byte_ten_rejected(self, tmp_path):
        path = tmp_path / "batch.bin"
        write_cifar_file(path, [10], pixel_fill=0)
        with pytest.raises(DataFormatError, match="label"):
            load_cifar10_binary(path)

    def test_multiple_files_concatenate(self, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        write_cifar_file(a, [1, 2], pixel_fill=10)
        write_cifar_file(b, [3], pixel_fill=20)
        ds = load_cifar10_binary([a, b])
        assert np.array_equal(ds.labels, [1, 2, 3])


class TestSynthetic:
    def test_huge_separation_is_nearest_centroid_separable(self):
        ds = synthetic_rates(classes=4, per_class=25, geometry=(9,), separation=6.0, seed=1)
        centroids = np.stack([ds.images[ds.labels == c].mean(axis=0) for c in range(4)])
        dists = ((ds.images[:, None, :] - centroids[None]) ** 2).sum(axis=2)
        assert (dists.argmin(axis=1) == ds.labels).mean() == 1.0

    def test_zero_separation_near_chance(self):
        ds = synthetic_rates(classes=4, per_class=50, geometry=(9,), separation=0.0, seed=1)
        centroids = np.stack([ds.images[ds.labels == c].mean(axis=0) for c in range(4)])
        dists = ((ds.images[:, None, :] - centroids[None]) ** 2).sum(axis=2)
        acc = (dists.argmin(axis=1) == ds.labels).mean()
        assert acc < 0.5  # classes indistinguishable up to sampling noise

    def test_reproducible(self):
        a = synthetic_rates(3, 10, (4,), 2.0, seed=9)
        b = synthetic_rates(3, 10, (4,), 2.0, seed=9)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)

    def test_values_clamped(self):
        ds = synthetic_rates(2, 30, (8,), 10.0, seed=0, jitter=0.5)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0


class TestSubsample:
    def test_identity_when_full(self):
        ds = synthetic_rates(2, 10, (3,), 1.0, seed=0)
        sub = subsample(ds, len(ds), seed=1)
        assert np.array_equal(np.sort(sub.labels), np.sort(ds.labels))

    def test_stratified_balance(self):
        ds = synthetic_rates(10, 30, (3,), 1.0, seed=0)
        sub = subsample(ds, 100, seed=1, stratified=True)
        counts = np.bincount(sub.labels, minlength=10)
        assert (counts == 10).all()

    def test_same_seed_same_subset(self):
        ds = synthetic_rates(3, 20, (3,), 1.0, seed=0)
        a = subsample(ds, 12, seed=5)
        b = subsample(ds, 12, seed=5)
        assert np.array_equal(a.images, b.images)

    def test_too_large_request(self):
        ds = synthetic_rates(2, 5, (3,), 1.0, seed=0)
        with pytest.raises(ValueError):
            subsample(ds, 11, seed=0)


class TestContainer:
    def test_dataset_round_trip_bitwise(self, tmp_path):
        ds = synthetic_rates(3, 8, (2, 2), 1.5, seed=3)
        path = tmp_path / "ds.bin"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert np.array_equal(back.images, ds.images)
        assert back.images.tobytes() == ds.images.tobytes()
        assert np.array_equal(back.labels, ds.labels)
        assert back.classes == ds.classes

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(ContainerError, match="container"):
            load_container(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "x.bin"
        save_container(path, {"kind": "test"}, {"a": np.arange(10.0)})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ContainerError, match="truncated"):
            load_container(path)

    def test_meta_round_trip(self, tmp_path):
        path = tmp_path / "x.bin"
        meta = {"kind": "test", "nested": {"a": [1, 2, 3]}}
        save_container(path, meta, {"z": np.zeros(3, dtype=np.int64)})
        back_meta, arrays = load_container(path)
        assert back_meta == meta
        assert arrays["z"].dtype == np.int64


class TestDatasetInvariants:
    def test_rejects_out_of_range_pixels(self):
        with pytest.raises(DataFormatError):
            Dataset(images=np.array([[1.5]]), labels=np.array([0]), classes=2)

    def test_rejects_bad_labels(self):
        with pytest.raises(DataFormatError):
            Dataset(images=np.array([[0.5]]), labels=np.array([2]), classes=2)

    def test_rejects_count_mismatch(self):
        with pytest.raises(DataFormatError):
            Dataset(images=np.zeros((2, 1)), labels=np.array([0]), classes=2)
