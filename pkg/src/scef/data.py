"""Datasets: an offline oriented-bars task and the CIFAR-10 binary batch format.

CIFAR-10 binary batches hold 10000 records of 3073 bytes each: one label
byte followed by 3072 pixel bytes (1024 red, 1024 green, 1024 blue; each
plane row-major 32x32).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError

CIFAR_RECORD = 1 + 3 * 32 * 32
CIFAR_RECORDS_PER_BATCH = 10000
CIFAR_BATCH_BYTES = CIFAR_RECORD * CIFAR_RECORDS_PER_BATCH  # 30,730,000
CIFAR_CLASSES = 10


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ParameterError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx])


def train_val_split(data: Dataset, val_fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Shuffle with ``seed`` and hold out ``round(val_fraction * N)`` samples."""
    if not 0.0 <= val_fraction < 1.0:
        raise ParameterError(f"val_fraction must be in [0, 1), got {val_fraction}")
    perm = np.random.default_rng(seed).permutation(len(data))
    n_val = int(round(val_fraction * len(data)))
    return data.subset(np.sort(perm[n_val:])), data.subset(np.sort(perm[:n_val]))


def bar_template(size: int, angle: float) -> np.ndarray:
    """Centered bar of half-length ``size / 4`` and width 1.5 at ``angle`` radians."""
    c = (size - 1) / 2.0
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = x - c, y - c
    along = dx * np.cos(angle) + dy * np.sin(angle)
    across = -dx * np.sin(angle) + dy * np.cos(angle)
    return ((np.abs(along) <= size / 4.0) & (np.abs(across) <= 0.75)).astype(np.float64)


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(img)
    H, W = img.shape
    ys, yd = (slice(0, H - dy), slice(dy, H)) if dy >= 0 else (slice(-dy, H), slice(0, H + dy))
    xs, xd = (slice(0, W - dx), slice(dx, W)) if dx >= 0 else (slice(-dx, W), slice(0, W + dx))
    out[yd, xd] = img[ys, xs]
    return out


def synthetic_bars(n: int, size: int = 16, classes: int = 4, seed=0, noise: float = 0.1) -> Dataset:
    """Single-channel images of one bar each; class ``c`` has angle ``pi c / classes``.

    Bars are translated by an integer offset of at most ``size // 4 - 1``
    pixels in each direction, then Gaussian noise of std ``noise`` is added.
    Labels cycle through the classes (balanced) in a seeded random order.
    """
    if not 2 <= classes <= 8:
        raise ParameterError(f"classes must be in 2..8, got {classes}")
    if size < 8:
        raise ParameterError(f"size must be >= 8, got {size}")
    rng = np.random.default_rng(seed)
    templates = [bar_template(size, np.pi * c / classes) for c in range(classes)]
    labels = rng.permutation(np.arange(n) % classes)
    m = size // 4 - 1
    shifts = rng.integers(-m, m + 1, size=(n, 2))
    images = np.stack([_shift(templates[lab], dy, dx) for lab, (dy, dx) in zip(labels, shifts)])
    if noise > 0:
        images = images + noise * rng.standard_normal(images.shape)
    return Dataset(images[:, None].astype(np.float64), labels.astype(np.int64))


def read_cifar10_batch(path) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``(uint8 images (N, 3, 32, 32), uint8 labels)`` from one binary batch."""
    path = Path(path)
    size = path.stat().st_size
    if size != CIFAR_BATCH_BYTES:
        raise FormatError(f"{path}: expected {CIFAR_BATCH_BYTES:,} bytes per batch file, found {size:,}")
    raw = np.fromfile(path, dtype=np.uint8).reshape(CIFAR_RECORDS_PER_BATCH, CIFAR_RECORD)
    labels = raw[:, 0].copy()
    if labels.max() >= CIFAR_CLASSES:
        raise FormatError(f"{path}: label byte {int(labels.max())} out of range 0..9")
    return raw[:, 1:].reshape(-1, 3, 32, 32).copy(), labels


def write_cifar10_batch(path, images: np.ndarray, labels: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8).reshape(-1, 3 * 32 * 32)
    labels = np.asarray(labels, dtype=np.uint8)
    if len(images) != CIFAR_RECORDS_PER_BATCH or len(labels) != CIFAR_RECORDS_PER_BATCH:
        raise ParameterError(f"a batch holds exactly {CIFAR_RECORDS_PER_BATCH} records")
    np.concatenate([labels[:, None], images], axis=1).tofile(path)


def stratified_indices(labels: np.ndarray, subset_size: int, seed, n_classes: int = CIFAR_CLASSES) -> np.ndarray:
    """Seeded class-balanced selection; the remainder goes to the lowest class ids."""
    rng = np.random.default_rng(seed)
    per = [subset_size // n_classes + (1 if c < subset_size % n_classes else 0) for c in range(n_classes)]
    picked = []
    for c, k in enumerate(per):
        pool = np.flatnonzero(labels == c)
        if len(pool) < k:
            raise ParameterError(f"class {c} has {len(pool)} samples, {k} requested")
        picked.append(rng.choice(pool, size=k, replace=False))
    return np.sort(np.concatenate(picked))


def load_cifar10(directory, subset_size: int, seed=0, files=None) -> Dataset:
    """Stratified CIFAR-10 subset, scaled to [0, 1] and standardized per channel.

    Reads ``data_batch_*.bin`` (sorted) unless ``files`` is given.  The
    mean/std constants come from the selected subset itself.
    """
    directory = Path(directory)
    paths = [directory / f for f in files] if files else sorted(directory.glob("data_batch_*.bin"))
    if not paths:
        raise FormatError(f"{directory}: no CIFAR-10 batch files (data_batch_*.bin)")
    imgs, labs = zip(*(read_cifar10_batch(p) for p in paths))
    images, labels = np.concatenate(imgs), np.concatenate(labs)
    idx = stratified_indices(labels, subset_size, seed)
    x = images[idx].astype(np.float64) / 255.0
    mean = x.mean(axis=(0, 2, 3), keepdims=True)
    std = x.std(axis=(0, 2, 3), keepdims=True)
    x = (x - mean) / np.where(std > 0, std, 1.0)
    return Dataset(x, labels[idx].astype(np.int64))
