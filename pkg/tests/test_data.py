import struct

import numpy as np
import pytest

from aircomp_vfl.data import (
    FeaturePartitionedDataset,
    load_fashion_mnist,
    synthetic_dataset,
    train_test_split_dataset,
)


class TestFeaturePartitionedDataset:
    def test_blocks_partition_full_matrix(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((10, 12))
        ds = FeaturePartitionedDataset.from_matrix(X, np.zeros(10), num_devices=3)
        assert ds.block_dims == (4, 4, 4)
        np.testing.assert_array_equal(ds.full_matrix(), X)

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            FeaturePartitionedDataset(
                (np.zeros((3, 2)), np.zeros((4, 2))), np.zeros(3)
            )

    def test_label_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            FeaturePartitionedDataset((np.zeros((3, 2)),), np.zeros(4))

    def test_indivisible_partition_rejected(self):
        with pytest.raises(ValueError):
            FeaturePartitionedDataset.from_matrix(
                np.zeros((5, 10)), np.zeros(5), num_devices=3
            )

    def test_explicit_block_dims(self):
        X = np.arange(12.0).reshape(2, 6)
        ds = FeaturePartitionedDataset.from_matrix(
            X, np.zeros(2), block_dims=[1, 2, 3]
        )
        assert ds.block_dims == (1, 2, 3)
        np.testing.assert_array_equal(ds.blocks[2], X[:, 3:])

    def test_block_norms(self):
        X = np.array([[3.0, 4.0], [0.0, 1.0]])
        ds = FeaturePartitionedDataset.from_matrix(X, np.zeros(2), num_devices=2)
        np.testing.assert_allclose(ds.block_norms_sq(), [9.0, 17.0])


class TestSyntheticDataset:
    def test_deterministic_under_seed(self):
        a = synthetic_dataset(42, 50, 8, 2)
        b = synthetic_dataset(42, 50, 8, 2)
        np.testing.assert_array_equal(a.full_matrix(), b.full_matrix())
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_label_balance(self):
        ds = synthetic_dataset(1, 10**4, 16, 4)
        balance = ds.labels.mean()
        assert abs(balance - 0.5) < 0.05

    def test_bad_dimensions_rejected(self):
        with pytest.raises(ValueError):
            synthetic_dataset(0, 10, 9, 2)
        with pytest.raises(ValueError):
            synthetic_dataset(0, 0, 8, 2)

    def test_split_is_partition(self):
        ds = synthetic_dataset(2, 100, 8, 2)
        train, test = train_test_split_dataset(ds, 0.2, 0)
        assert train.num_samples == 80
        assert test.num_samples == 20


def write_idx_images(path, images):
    arr = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", 0x00000803, *arr.shape))
        fh.write(arr.tobytes())


def write_idx_labels(path, labels):
    arr = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", 0x00000801, arr.shape[0]))
        fh.write(arr.tobytes())


class TestIdxLoader:
    def test_roundtrip_with_scaling_and_partition(self, tmp_path):
        rng = np.random.default_rng(3)
        images = rng.integers(0, 256, size=(5, 28, 28), dtype=np.uint8)
        labels = rng.integers(0, 10, size=5, dtype=np.uint8)
        img_path, lab_path = tmp_path / "img.idx", tmp_path / "lab.idx"
        write_idx_images(img_path, images)
        write_idx_labels(lab_path, labels)
        ds = load_fashion_mnist(img_path, lab_path, num_devices=49)
        assert ds.num_devices == 49
        assert ds.block_dims == tuple([16] * 49)
        np.testing.assert_array_equal(ds.labels, labels)
        np.testing.assert_allclose(
            ds.full_matrix(), images.reshape(5, -1) / 255.0
        )

    def test_one_feature_per_device(self, tmp_path):
        images = np.zeros((2, 28, 28), dtype=np.uint8)
        labels = np.zeros(2, dtype=np.uint8)
        write_idx_images(tmp_path / "i", images)
        write_idx_labels(tmp_path / "l", labels)
        ds = load_fashion_mnist(tmp_path / "i", tmp_path / "l", num_devices=784)
        assert ds.block_dims == tuple([1] * 784)

    def test_indivisible_device_count_rejected(self, tmp_path):
        images = np.zeros((2, 28, 28), dtype=np.uint8)
        labels = np.zeros(2, dtype=np.uint8)
        write_idx_images(tmp_path / "i", images)
        write_idx_labels(tmp_path / "l", labels)
        with pytest.raises(ValueError, match="divide"):
            load_fashion_mnist(tmp_path / "i", tmp_path / "l", num_devices=3)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.idx"
        with open(path, "wb") as fh:
            fh.write(struct.pack(">iiii", 0x00000999, 1, 28, 28))
            fh.write(bytes(28 * 28))
        write_idx_labels(tmp_path / "l", np.zeros(1, dtype=np.uint8))
        with pytest.raises(ValueError, match="magic"):
            load_fashion_mnist(path, tmp_path / "l", num_devices=7)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "trunc.idx"
        with open(path, "wb") as fh:
            fh.write(struct.pack(">iiii", 0x00000803, 2, 28, 28))
            fh.write(bytes(28 * 28))  # only one of two images
        write_idx_labels(tmp_path / "l", np.zeros(2, dtype=np.uint8))
        with pytest.raises(ValueError, match="truncated"):
            load_fashion_mnist(path, tmp_path / "l", num_devices=7)

    def test_count_mismatch_rejected(self, tmp_path):
        write_idx_images(tmp_path / "i", np.zeros((2, 28, 28), dtype=np.uint8))
        write_idx_labels(tmp_path / "l", np.zeros(3, dtype=np.uint8))
        with pytest.raises(ValueError, match="count"):
            load_fashion_mnist(tmp_path / "i", tmp_path / "l", num_devices=7)
