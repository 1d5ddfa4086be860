"""Feature-partitioned datasets: synthetic generation and IDX image loading."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class FeaturePartitionedDataset:
    """Samples split column-wise across devices, labels held by the server.

    ``blocks[k]`` is the (L, d_k) feature block owned by device k; the
    concatenation of all blocks in device order is the full design matrix.
    """

    blocks: tuple = field()
    labels: np.ndarray = field()

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=float) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "labels", np.asarray(self.labels))
        if not blocks:
            raise ValueError("dataset needs at least one device block")
        n_rows = {b.shape[0] for b in blocks}
        if len(n_rows) != 1:
            raise ValueError(f"device blocks disagree on sample count: {sorted(n_rows)}")
        if self.labels.shape[0] != blocks[0].shape[0]:
            raise ValueError("label count does not match sample count")

    @property
    def num_samples(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def num_devices(self) -> int:
        return len(self.blocks)

    @property
    def block_dims(self) -> tuple:
        return tuple(b.shape[1] for b in self.blocks)

    @property
    def total_dim(self) -> int:
        return sum(self.block_dims)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def full_matrix(self) -> np.ndarray:
        """Concatenate the device blocks back into the (L, d) design matrix."""
        return np.hstack(self.blocks)

    def block_norms_sq(self) -> np.ndarray:
        """Per-device sum over samples of the squared feature-row norms, shape (K,)."""
        return np.array([float(np.sum(b * b)) for b in self.blocks])

    def subset(self, idx) -> "FeaturePartitionedDataset":
        return FeaturePartitionedDataset(
            tuple(b[idx] for b in self.blocks), self.labels[idx]
        )

    @classmethod
    def from_matrix(cls, X, y, num_devices=None, block_dims=None):
        """Partition the columns of X contiguously across devices."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        d = X.shape[1]
        if block_dims is None:
            if num_devices is None:
                raise ValueError("give either num_devices or block_dims")
            if d % num_devices != 0:
                raise ValueError(
                    f"device count {num_devices} does not divide feature dim {d}"
                )
            block_dims = [d // num_devices] * num_devices
        if sum(block_dims) != d:
            raise ValueError("block_dims must sum to the feature dimension")
        edges = np.cumsum([0] + list(block_dims))
        blocks = tuple(X[:, edges[k]:edges[k + 1]] for k in range(len(block_dims)))
        return cls(blocks, np.asarray(y))


def synthetic_dataset(seed, num_samples, total_dim, num_devices, label_noise=0.0):
    """Standard-normal features with labels from a random linear separator.

    ``label_noise`` is the standard deviation of Gaussian noise added to the
    margin before thresholding; 0 gives a separable problem.
    """
    if total_dim % num_devices != 0:
        raise ValueError(
            f"device count {num_devices} does not divide feature dim {total_dim}"
        )
    if num_samples < 1 or total_dim < 1 or num_devices < 1:
        raise ValueError("num_samples, total_dim and num_devices must be positive")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((num_samples, total_dim))
    w_true = rng.standard_normal(total_dim) / np.sqrt(total_dim)
    margin = X @ w_true
    if label_noise > 0:
        margin = margin + label_noise * rng.standard_normal(num_samples)
    y = (margin > 0).astype(np.int64)
    return FeaturePartitionedDataset.from_matrix(X, y, num_devices=num_devices)


def train_test_split_dataset(dataset, holdout_fraction, seed):
    """Deterministic shuffled split into (train, test) datasets."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must be in [0, 1)")
    n = dataset.num_samples
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(holdout_fraction * n))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    if n_test == 0:
        return dataset.subset(perm), None
    return dataset.subset(train_idx), dataset.subset(test_idx)


def _read_idx(path, expected_magic, expected_ndim):
    with open(path, "rb") as fh:
        header = fh.read(4)
        if len(header) < 4:
            raise ValueError(f"{path}: truncated IDX header")
        (magic,) = struct.unpack(">i", header)
        if magic != expected_magic:
            raise ValueError(
                f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
            )
        dims = []
        for _ in range(expected_ndim):
            raw = fh.read(4)
            if len(raw) < 4:
                raise ValueError(f"{path}: truncated IDX dimension header")
            dims.append(struct.unpack(">i", raw)[0])
        count = int(np.prod(dims))
        data = np.frombuffer(fh.read(count), dtype=np.uint8)
        if data.size != count:
            raise ValueError(f"{path}: truncated IDX payload")
    return data.reshape(dims)


def load_fashion_mnist(images_path, labels_path, num_devices):
    """Load an IDX image/label pair and split features contiguously over devices.

    Pixels are scaled to [0, 1]; the 28x28 images are flattened row-major and
    cut into ``num_devices`` equal contiguous blocks.
    """
    images = _read_idx(images_path, IDX_IMAGE_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise ValueError("image and label counts differ")
    X = images.reshape(images.shape[0], -1).astype(float) / 255.0
    if X.shape[1] % num_devices != 0:
        raise ValueError(
            f"device count {num_devices} does not divide feature dim {X.shape[1]}"
        )
    return FeaturePartitionedDataset.from_matrix(
        X, labels.astype(np.int64), num_devices=num_devices
    )
