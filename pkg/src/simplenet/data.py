"""MNIST / CIFAR binary loaders, per-channel normalization and augmentation.

Expected directory layout (``.gz`` variants of the MNIST files also work)::

    <dir>/train-images-idx3-ubyte   <dir>/train-labels-idx1-ubyte
    <dir>/t10k-images-idx3-ubyte    <dir>/t10k-labels-idx1-ubyte

    <dir>/data_batch_1.bin .. data_batch_5.bin, test_batch.bin   (CIFAR-10)
    <dir>/train.bin, test.bin                                      (CIFAR-100)

A ``cifar-10-batches-bin`` / ``cifar-100-binary`` subdirectory is also found.
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, replace

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_PIXELS = 3 * 32 * 32


class DataError(ValueError):
    """Malformed or missing dataset files."""


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32
    labels: np.ndarray  # (N,) int64
    split: str = "train"
    classes: int = 10
    norm: tuple | None = None  # (mean, std) per channel, applied to images

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and int(self.labels.max()) >= self.classes:
            raise DataError(f"label {int(self.labels.max())} >= class count {self.classes}")

    def __len__(self):
        return len(self.labels)

    def subset(self, n: int) -> "Dataset":
        return replace(self, images=self.images[:n], labels=self.labels[:n])


@dataclass(frozen=True)
class AugmentConfig:
    pad: int = 4
    crop: int = 32
    mirror: bool = True

    def check(self, h: int, w: int) -> None:
        if self.crop > min(h, w) + 2 * self.pad:
            raise ValueError(f"crop {self.crop} larger than padded image {min(h, w) + 2 * self.pad}")


# ---------------------------------------------------------------------------
# MNIST


def _read(path: str) -> bytes:
    for candidate in (path, path + ".gz"):
        if os.path.exists(candidate):
            opener = gzip.open if candidate.endswith(".gz") else open
            with opener(candidate, "rb") as fh:
                return fh.read()
    raise DataError(f"missing file {path}")


def parse_idx(raw: bytes, magic: int, name: str = "idx") -> np.ndarray:
    """Decode one IDX file (big-endian header, unsigned-byte payload)."""
    if len(raw) < 8:
        raise DataError(f"{name}: truncated header")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise DataError(f"{name}: wrong magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError(f"{name}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    payload = len(raw) - header
    if payload < count:
        raise DataError(f"{name}: truncated file, {payload} of {count} payload bytes")
    if payload > count:
        raise DataError(f"{name}: {payload - count} trailing bytes after payload")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def _mnist_split(directory: str, prefix: str, split: str) -> Dataset:
    images = parse_idx(_read(os.path.join(directory, f"{prefix}-images-idx3-ubyte")),
                       IDX_IMAGES_MAGIC, f"{prefix}-images")
    labels = parse_idx(_read(os.path.join(directory, f"{prefix}-labels-idx1-ubyte")),
                       IDX_LABELS_MAGIC, f"{prefix}-labels")
    if len(images) != len(labels):
        raise DataError(f"{prefix}: count mismatch, {len(images)} images vs {len(labels)} labels")
    x = images.astype(np.float32)[:, None] / np.float32(255.0)
    return Dataset(x, labels.astype(np.int64), split, 10)


def load_mnist(directory: str) -> tuple[Dataset, Dataset]:
    return _mnist_split(directory, "train", "train"), _mnist_split(directory, "t10k", "test")


# ---------------------------------------------------------------------------
# CIFAR


def parse_cifar(raw: bytes, label_bytes: int, name: str = "cifar") -> tuple[np.ndarray, np.ndarray]:
    """Decode fixed-size records: label byte(s), then 3072 channel-planar pixels.

    With two label bytes (CIFAR-100: coarse, fine) the fine label is used.
    """
    record = label_bytes + CIFAR_PIXELS
    if len(raw) == 0 or len(raw) % record:
        raise DataError(f"{name}: wrong file size {len(raw)}, not a multiple of {record}")
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    labels = rows[:, label_bytes - 1].astype(np.int64)
    images = rows[:, label_bytes:].reshape(-1, 3, 32, 32).astype(np.float32) / np.float32(255.0)
    return images, labels


def _cifar_dir(directory: str, marker: str, sub: str) -> str:
    if os.path.exists(os.path.join(directory, marker)):
        return directory
    nested = os.path.join(directory, sub)
    if os.path.exists(os.path.join(nested, marker)):
        return nested
    raise DataError(f"missing file {os.path.join(directory, marker)}")


def load_cifar(directory: str, variant: str = "c10") -> tuple[Dataset, Dataset]:
    if variant in ("c10", "cifar10"):
        root = _cifar_dir(directory, "data_batch_1.bin", "cifar-10-batches-bin")
        train_files = [f"data_batch_{i}.bin" for i in range(1, 6)]
        test_files = ["test_batch.bin"]
        label_bytes, classes = 1, 10
    elif variant in ("c100", "cifar100"):
        root = _cifar_dir(directory, "train.bin", "cifar-100-binary")
        train_files, test_files = ["train.bin"], ["test.bin"]
        label_bytes, classes = 2, 100
    else:
        raise ValueError(f"unknown CIFAR variant {variant!r}")

    def load(files, split):
        parts = [parse_cifar(_read(os.path.join(root, f)), label_bytes, f) for f in files]
        return Dataset(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                       split, classes)

    return load(train_files, "train"), load(test_files, "test")


def load_dataset(name: str, directory: str) -> tuple[Dataset, Dataset]:
    if name == "mnist":
        return load_mnist(directory)
    if name in ("cifar10", "cifar100"):
        return load_cifar(directory, name)
    raise ValueError(f"unknown dataset {name!r}")


# ---------------------------------------------------------------------------
# normalization and augmentation


def compute_norm_stats(train: Dataset | np.ndarray):
    """Population mean and std per channel; zero std is clamped to 1."""
    images = train.images if isinstance(train, Dataset) else np.asarray(train)
    if images.size == 0:
        raise ValueError("cannot compute statistics of an empty dataset")
    mean = images.mean(axis=(0, 2, 3), dtype=np.float64)
    std = images.std(axis=(0, 2, 3), dtype=np.float64)
    std[std == 0] = 1.0
    return mean.astype(np.float32), std.astype(np.float32)


def normalize(images: np.ndarray, mean, std) -> np.ndarray:
    shape = (1, -1, 1, 1)
    return ((images - np.reshape(mean, shape)) / np.reshape(std, shape)).astype(np.float32)


def denormalize(images: np.ndarray, mean, std) -> np.ndarray:
    shape = (1, -1, 1, 1)
    return (images * np.reshape(std, shape) + np.reshape(mean, shape)).astype(np.float32)


def with_norm(ds: Dataset, mean, std) -> Dataset:
    """Attach normalization statistics; images stay in [0, 1]."""
    return replace(ds, norm=(np.asarray(mean, np.float32), np.asarray(std, np.float32)))


def inputs(ds: Dataset, images: np.ndarray | None = None) -> np.ndarray:
    """Network inputs: ``images`` (default: all of ``ds``) normalized by ``ds.norm``."""
    images = ds.images if images is None else images
    if ds.norm is None:
        return images
    return normalize(images, *ds.norm)


def augment_batch(batch: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator,
                  offsets=None, flips=None) -> np.ndarray:
    """Zero-pad, take a random ``crop`` x ``crop`` window and mirror with p=0.5.

    ``offsets`` (n, 2) and ``flips`` (n,) override the random draws.
    """
    n, c, h, w = batch.shape
    cfg.check(h, w)
    padded = np.pad(batch, ((0, 0), (0, 0), (cfg.pad, cfg.pad), (cfg.pad, cfg.pad)))
    span_h = h + 2 * cfg.pad - cfg.crop + 1
    span_w = w + 2 * cfg.pad - cfg.crop + 1
    if offsets is None:
        offsets = np.stack([rng.integers(0, span_h, n), rng.integers(0, span_w, n)], axis=1)
    if flips is None:
        flips = rng.random(n) < 0.5 if cfg.mirror else np.zeros(n, dtype=bool)
    out = np.empty((n, c, cfg.crop, cfg.crop), dtype=batch.dtype)
    for i, (dy, dx) in enumerate(offsets):
        window = padded[i, :, dy:dy + cfg.crop, dx:dx + cfg.crop]
        out[i] = window[:, :, ::-1] if flips[i] else window
    return out


def mirror(batch: np.ndarray) -> np.ndarray:
    return batch[..., ::-1].copy()
