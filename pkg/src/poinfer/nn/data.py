"""Datasets and loaders for IDX and CIFAR-10 binary files."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import FormatError, ShapeError

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
CIFAR_RECORD = 3073


@dataclass(frozen=True, eq=False)
class Dataset:
    """Images ``(n, H, W, C)`` scaled to [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    classes: int = 10

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ShapeError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ShapeError(f"labels must lie in [0, {self.classes})")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index, split: str | None = None) -> "Dataset":
        return Dataset(self.images[index], self.labels[index], split or self.split, self.classes)


def _read(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def read_idx(path, magic: int) -> np.ndarray:
    data = _read(path)
    if len(data) < 4:
        raise FormatError(f"{path}: truncated header")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    rank = found & 0xFF
    header = 4 + 4 * rank
    if len(data) < header:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{rank}I", data[4:header])
    size = int(np.prod(dims))
    if len(data) - header != size:
        raise FormatError(f"{path}: expected {size} data bytes for dims {dims}, found {len(data) - header}")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    images = read_idx(images_path, IDX_IMAGES)
    labels = read_idx(labels_path, IDX_LABELS)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels")
    return Dataset((images[..., None] / 255.0).astype(np.float32), labels.astype(np.int64), split)


def load_cifar10_bin(paths, split: str = "train") -> Dataset:
    chunks = []
    for path in [paths] if isinstance(paths, (str, Path)) else paths:
        data = _read(path)
        if not data or len(data) % CIFAR_RECORD:
            raise FormatError(f"{path}: size {len(data)} is not a multiple of {CIFAR_RECORD}-byte records")
        chunks.append(np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD))
    records = np.concatenate(chunks)
    images = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return Dataset((images / 255.0).astype(np.float32), records[:, 0].astype(np.int64), split)


def balanced_split(images, labels, train_per_class: int, test_per_class: int, seed: int = 0, classes: int = 10):
    """Disjoint class-balanced train and test splits drawn with a seeded shuffle."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(classes):
        idx = rng.permutation(np.flatnonzero(labels == c))
        if len(idx) < train_per_class + test_per_class:
            raise ShapeError(f"class {c} has {len(idx)} samples, need {train_per_class + test_per_class}")
        test_idx.append(idx[:test_per_class])
        train_idx.append(idx[test_per_class : test_per_class + train_per_class])
    train_idx = rng.permutation(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    return (
        Dataset(images[train_idx], labels[train_idx], "train", classes),
        Dataset(images[test_idx], labels[test_idx], "test", classes),
    )


def mnist_sample(train_per_class: int = 200, test_per_class: int = 100, seed: int = 0):
    """Class-balanced splits of the 5,000-digit MNIST sample bundled with mlxtend."""
    from mlxtend.data import mnist_data

    x, y = mnist_data()
    images = (x.reshape(-1, 28, 28, 1) / 255.0).astype(np.float32)
    return balanced_split(images, y, train_per_class, test_per_class, seed)
