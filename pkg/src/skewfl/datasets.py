"""Synthetic labeled data and client partitioning.

The datasets are Gaussian blobs: one mean per class placed along
(approximately) orthonormal random directions scaled by ``separation``, unit
isotropic noise around each mean.  Partitioning draws per-class client
proportions from a symmetric Dirichlet and allocates each class's sample
indices contiguously, so low concentration produces strongly label-skewed
shards.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise InvalidParameterError(
                f"features {x.shape} and labels {y.shape} do not align")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.size else 0

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(features=self.features[idx], labels=self.labels[idx])


def class_means(num_classes: int, dim: int, separation: float,
                seed: int) -> np.ndarray:
    """(c, d) class-mean matrix: separation-scaled random directions,
    orthonormalized when the dimension allows."""
    rng = np.random.default_rng(int(seed))
    raw = rng.standard_normal((dim, num_classes))
    if dim >= num_classes:
        q, r = np.linalg.qr(raw)
        # make the factorization sign-stable
        q = q * np.sign(np.where(np.diag(r) == 0.0, 1.0, np.diag(r)))
        directions = q.T
    else:
        directions = raw.T
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return float(separation) * directions


def generate_synthetic_dataset(num_classes: int, dim: int, per_class: int,
                               separation: float, seed: int,
                               noise_seed: int | None = None) -> Dataset:
    """Balanced Gaussian-blob dataset, deterministic given seeds.

    ``noise_seed`` lets a caller draw fresh samples around the same class
    means (e.g. a held-out split); by default noise comes from a stream
    derived from ``seed`` itself.
    """
    num_classes = int(num_classes)
    dim = int(dim)
    per_class = int(per_class)
    if num_classes < 2:
        raise InvalidParameterError("need at least 2 classes")
    if dim < 1 or per_class < 1:
        raise InvalidParameterError("dim and per_class must be >= 1")
    means = class_means(num_classes, dim, separation, seed)
    if noise_seed is None:
        noise_rng = np.random.default_rng(
            np.random.SeedSequence((int(seed), 0x5E0)))
    else:
        noise_rng = np.random.default_rng(
            np.random.SeedSequence((int(noise_seed), 0x5E0)))
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    noise = noise_rng.standard_normal((num_classes * per_class, dim))
    features = means[labels] + noise
    return Dataset(features=features, labels=labels)


@dataclass(frozen=True)
class PartitionSpec:
    beta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not (self.beta > 0.0):
            raise InvalidParameterError("dirichlet beta must be > 0")


def dirichlet_partition(labels, n: int, spec: PartitionSpec,
                        shuffle_within_class: bool = False):
    """Split sample indices across ``n`` clients with per-class Dirichlet
    proportions.

    Per class: proportions from normalized Gamma(beta) draws, then the class's
    indices are allocated contiguously using largest-remainder rounding of the
    cumulative fractions.  Returns ``n`` disjoint ascending index lists that
    cover every sample; empty shards are legal.

    ``shuffle_within_class`` permutes each class's indices (seeded) before the
    contiguous allocation; combined with a huge beta this yields the IID
    split.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = int(n)
    if n < 1:
        raise InvalidParameterError("need at least one client")
    if labels.size == 0:
        raise InvalidParameterError("labels must be nonempty")
    rng = np.random.default_rng(int(spec.seed))
    shards = [[] for _ in range(n)]
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        if shuffle_within_class:
            idx = idx[rng.permutation(idx.size)]
        draws = rng.gamma(spec.beta, 1.0, size=n)
        total = draws.sum()
        if total == 0.0 or not np.isfinite(total):
            q = np.full(n, 1.0 / n)
        else:
            q = draws / total
        counts = _largest_remainder_counts(q, idx.size)
        start = 0
        for k in range(n):
            shards[k].extend(idx[start:start + counts[k]].tolist())
            start += counts[k]
    return [np.array(sorted(s), dtype=np.int64) for s in shards]


def _largest_remainder_counts(fractions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total`` proportional to ``fractions``."""
    exact = fractions * total
    base = np.floor(exact).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        remainder = exact - base
        top = np.lexsort((np.arange(fractions.size), -remainder))[:short]
        base[top] += 1
    return base


def iid_partition(labels, n: int, seed: int):
    """The IID split: a near-degenerate Dirichlet (beta = 1e6) over shuffled
    within-class indices, so shards are near-equal and class-balanced."""
    return dirichlet_partition(labels, n, PartitionSpec(beta=1e6, seed=seed),
                               shuffle_within_class=True)


# ---------------------------------------------------------------------------
# CSV dumps


def save_partition_csv(path, labels, shards) -> None:
    """`sample_id,label,client_id` rows, ascending by sample id."""
    labels = np.asarray(labels, dtype=np.int64)
    owner = np.full(labels.size, -1, dtype=np.int64)
    for cid, idx in enumerate(shards):
        owner[idx] = cid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label", "client_id"])
        for sid in range(labels.size):
            writer.writerow([sid, int(labels[sid]), int(owner[sid])])


def load_partition_csv(path):
    """Inverse of :func:`save_partition_csv`: (labels, shards)."""
    sample_ids, labels, owners = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "label", "client_id"]:
            raise InvalidParameterError(f"{path}: not a partition CSV")
        for rec in reader:
            if not rec:
                continue
            sample_ids.append(int(rec[0]))
            labels.append(int(rec[1]))
            owners.append(int(rec[2]))
    if not sample_ids:
        raise InvalidParameterError(f"{path}: partition CSV has no rows")
    order = np.argsort(sample_ids)
    labels_arr = np.asarray(labels, dtype=np.int64)[order]
    owners_arr = np.asarray(owners, dtype=np.int64)[order]
    n = int(owners_arr.max()) + 1
    shards = [np.nonzero(owners_arr == cid)[0].astype(np.int64) for cid in range(n)]
    return labels_arr, shards


def save_features_csv(path, dataset: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"x{j}" for j in range(dataset.dim)])
        for y, row in zip(dataset.labels, dataset.features):
            writer.writerow([int(y)] + [repr(float(v)) for v in row])


def load_features_csv(path) -> Dataset:
    rows, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header or header[0] != "label":
            raise InvalidParameterError(f"{path}: not a feature CSV")
        for rec in reader:
            if not rec:
                continue
            labels.append(int(rec[0]))
            rows.append([float(v) for v in rec[1:]])
    if not rows:
        raise InvalidParameterError(f"{path}: feature CSV has no rows")
    return Dataset(features=np.array(rows), labels=np.array(labels))
