"""Seeded synthetic classification data and the train_w / train_r / valid split."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    seed: int
    n_classes: int
    noise: float = 0.0
    clusters_per_class: int = 1

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise InvalidArgumentError("features and labels disagree on sample count")
        if self.labels.size and int(self.labels.max()) >= self.n_classes:
            raise InvalidArgumentError("label out of range")
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitSet:
    train_w: np.ndarray
    train_r: np.ndarray
    valid: np.ndarray

    @property
    def train(self) -> np.ndarray:
        """Both training parts, used for stand-alone training."""
        return np.concatenate([self.train_w, self.train_r])


def generate_dataset(seed: int, n_samples: int, n_features: int, n_classes: int,
                     noise: float, clusters_per_class: int = 1) -> Dataset:
    """Gaussian blobs with centers on the unit sphere.

    With ``clusters_per_class > 1`` each class is a union of several blobs, which
    makes the problem non-linear. Class counts are balanced to within one
    sample. The result depends only on the arguments.
    """
    if n_samples <= 0 or n_classes <= 0:
        raise InvalidArgumentError("n_samples and n_classes must be positive")
    if n_samples < n_classes:
        raise InvalidArgumentError("need at least one sample per class")
    if n_features < 2:
        raise InvalidArgumentError("n_features must be >= 2")
    if noise < 0 or not np.isfinite(noise):
        raise InvalidArgumentError("noise must be a finite non-negative real")

    if clusters_per_class < 1:
        raise InvalidArgumentError("clusters_per_class must be positive")

    rng = np.random.default_rng(seed)
    n_centers = n_classes * clusters_per_class
    centers = rng.standard_normal((n_centers, n_features))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    # blob k belongs to class k % n_classes; blobs are filled round-robin
    blob = rng.permutation(np.arange(n_samples) % n_centers)
    labels = blob % n_classes
    features = centers[blob] + noise * rng.standard_normal((n_samples, n_features))
    return Dataset(features, labels.astype(np.int64), seed, n_classes, float(noise),
                   clusters_per_class)


def split_dataset(ds: Dataset, fractions, seed: int) -> SplitSet:
    """Partition a seeded permutation of the sample indices by ``fractions``."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise InvalidArgumentError("expected three fractions")
    if any(f <= 0 for f in fractions):
        raise InvalidArgumentError("each fraction must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"fractions sum to {sum(fractions)!r}, not 1")

    n = len(ds)
    n_w = int(round(fractions[0] * n))
    n_r = int(round(fractions[1] * n))
    if min(n_w, n_r, n - n_w - n_r) < 1:
        raise InvalidArgumentError(f"{n} samples cannot fill all three parts")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitSet(perm[:n_w], perm[n_w:n_w + n_r], perm[n_w + n_r:])


def batches(ds: Dataset, idx, batch_size: int, rng: np.random.Generator):
    """One shuffled epoch over ``idx`` as a list of (features, labels) blocks."""
    if batch_size <= 0:
        raise InvalidArgumentError("batch_size must be positive")
    idx = np.asarray(idx)
    if idx.size == 0:
        raise InvalidArgumentError("empty index list")
    order = idx[rng.permutation(idx.size)]
    return [(ds.features[order[k:k + batch_size]], ds.labels[order[k:k + batch_size]])
            for k in range(0, order.size, batch_size)]


def cycle_batches(ds: Dataset, idx, batch_size: int,
                  rng: np.random.Generator) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless stream of minibatches, reshuffling at every pass."""
    while True:
        yield from batches(ds, idx, batch_size, rng)


def save_dataset(ds: Dataset, path) -> None:
    lines = [f"{len(ds)} {ds.n_features} {ds.n_classes} {ds.seed} {ds.noise!r}"]
    for row, label in zip(ds.features, ds.labels):
        lines.append(" ".join(repr(float(v)) for v in row) + f" {int(label)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    header, *rows = Path(path).read_text().splitlines()
    n, d, c, seed, noise = header.split()
    n, d, c = int(n), int(d), int(c)
    if len(rows) != n:
        raise InvalidArgumentError(f"header announces {n} rows, file has {len(rows)}")
    table = [r.split() for r in rows]
    features = np.array([[float(v) for v in r[:d]] for r in table], dtype=np.float64)
    labels = np.array([int(r[d]) for r in table], dtype=np.int64)
    return Dataset(features.reshape(n, d), labels, int(seed), c, float(noise))


@dataclass(frozen=True)
class DataConfig:
    seed: int = 0
    n_samples: int = 3000
    n_features: int = 16
    n_classes: int = 4
    noise: float = 0.25
    clusters_per_class: int = 1
    fractions: tuple[float, float, float] = (0.4, 0.3, 0.3)
    split_seed: int = 0

    def build(self) -> tuple[Dataset, SplitSet]:
        ds = generate_dataset(self.seed, self.n_samples, self.n_features, self.n_classes,
                              self.noise, self.clusters_per_class)
        return ds, split_dataset(ds, self.fractions, self.split_seed)
