"""Datasets, agency partitions and the limited cross-agency data exchange."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    class_count: int

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-d matrix, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"{y.size} labels for {x.shape[0]} examples")
        if y.min() < 0 or y.max() >= self.class_count:
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if x.min() < 0.0 or x.max() > 1.0:
            raise ValueError("feature values must lie in [0, 1]")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_count)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def bytes_per_example(self) -> int:
        """Storage cost of one example in IDX form: one byte per pixel plus a label byte."""
        return self.dim + 1


def concat(parts) -> Dataset:
    parts = list(parts)
    return Dataset(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        parts[0].class_count,
    )


@dataclass(frozen=True)
class PartitionPlan:
    assignments: dict

    def __post_init__(self):
        object.__setattr__(
            self,
            "assignments",
            {int(k): np.asarray(v, dtype=np.int64) for k, v in sorted(self.assignments.items())},
        )

    @property
    def agencies(self) -> int:
        return len(self.assignments)

    def validate(self, n: int):
        seen = np.zeros(n, dtype=np.int64)
        for a, idx in self.assignments.items():
            if idx.size == 0:
                raise ValueError(f"agency {a} holds no examples")
            np.add.at(seen, idx, 1)
        if np.any(seen != 1):
            raise ValueError("partition is not a disjoint cover of the dataset")

    def shards(self, data: Dataset) -> list[Dataset]:
        return [data.subset(self.assignments[a]) for a in range(self.agencies)]


# --- IDX container -----------------------------------------------------------

def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, magic: int, ndim: int, what: str) -> np.ndarray:
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) >= 4:
        (got,) = struct.unpack(">I", raw[:4])
        if got != magic:
            raise IdxFormatError(
                f"{path}: bad magic 0x{got:08x} for {what} (expected 0x{magic:08x})"
            )
    if len(raw) < 4 + 4 * ndim:
        raise IdxFormatError(f"{path}: truncated {what} header")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    count = int(np.prod(dims))
    body = raw[4 + 4 * ndim:]
    if len(body) < count:
        raise IdxFormatError(f"{path}: truncated {what} payload ({len(body)} of {count} bytes)")
    return np.frombuffer(body, dtype=np.uint8, count=count).reshape(dims)


def load_idx(images_path, labels_path, class_count: int = 10) -> Dataset:
    images = _read_idx(images_path, IMAGES_MAGIC, 3, "images")
    labels = _read_idx(labels_path, LABELS_MAGIC, 1, "labels")
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), class_count)


def write_idx(data: Dataset, images_path, labels_path, rows: int | None = None):
    """Write ``data`` as an IDX pair. Features must be multiples of 1/255."""
    n, d = data.features.shape
    if rows is None:
        rows = int(round(d ** 0.5))
    if d % rows:
        raise ValueError(f"cannot lay out {d} features as {rows} rows")
    pix = np.rint(data.features * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, d // rows))
        fh.write(pix.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, n))
        fh.write(data.labels.astype(np.uint8).tobytes())


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def find_mnist(directory) -> dict:
    """Locate the standard MNIST file names (optionally ``.gz``) in ``directory``."""
    directory = Path(directory)
    out = {}
    for split, names in MNIST_FILES.items():
        paths = []
        for name in names:
            for cand in (directory / name, directory / (name + ".gz")):
                if cand.exists():
                    paths.append(cand)
                    break
            else:
                raise FileNotFoundError(f"{name}[.gz] not found in {directory}")
        out[split] = tuple(paths)
    return out


def load_mnist(directory) -> tuple[Dataset, Dataset]:
    files = find_mnist(directory)
    return load_idx(*files["train"]), load_idx(*files["test"])


# --- synthetic stand-in ------------------------------------------------------

BLOB_SIGMA = 0.08


def generate_synthetic(classes: int, per_class: int, dim: int, seed: int,
                       test_per_class: int = 0):
    """Gaussian blobs, one per class, clamped to [0, 1].

    Class centers are drawn from ``seed`` alone, so train and held-out test
    sets generated with the same seed share them. With ``test_per_class`` > 0
    a ``(train, test)`` pair is returned.
    """
    if classes < 2 or per_class < 1 or dim < 1:
        raise ValueError("need classes >= 2, per_class >= 1, dim >= 1")
    centers = np.random.default_rng([seed, 0]).uniform(0.2, 0.8, size=(classes, dim))

    def draw(m, stream):
        rng = np.random.default_rng([seed, stream])
        y = np.repeat(np.arange(classes), m)
        x = centers[y] + rng.normal(0.0, BLOB_SIGMA, size=(y.size, dim))
        np.clip(x, 0.0, 1.0, out=x)
        return Dataset(x, y, classes)

    train = draw(per_class, 1)
    if test_per_class:
        return train, draw(test_per_class, 2)
    return train


# --- partitioning ------------------------------------------------------------

def partition_random(data: Dataset, agencies: int, seed: int) -> PartitionPlan:
    n = len(data)
    if agencies < 1:
        raise ValueError("need at least one agency")
    if agencies > n:
        raise ValueError(f"cannot split {n} examples across {agencies} agencies")
    order = np.random.default_rng(seed).permutation(n)
    return PartitionPlan({a: order[a::agencies] for a in range(agencies)})


def partition_by_class(data: Dataset, agencies: int) -> PartitionPlan:
    """Class ``c`` goes wholly to agency ``c mod agencies``."""
    c = data.class_count
    if agencies < 1:
        raise ValueError("need at least one agency")
    if agencies > c:
        raise ValueError(
            f"by-class partition needs agencies <= classes ({agencies} > {c})"
        )
    owner = data.labels % agencies
    return PartitionPlan({a: np.flatnonzero(owner == a) for a in range(agencies)})


def exchange_indices(data: Dataset, plan: PartitionPlan, k: int, seed: int) -> dict:
    """Indices each agency receives in a ``k``-per-class exchange.

    Donors are drawn without replacement from the class's global pool minus
    the receiving agency's own shard; when ``k`` or fewer such examples exist
    the agency receives all of them, so it ends up holding the whole class.
    """
    if k < 0:
        raise ValueError("exchange amount must be >= 0")
    hist = data.class_histogram()
    present = hist[hist > 0]
    if k > present.min():
        raise ValueError(f"exchange of {k} per class exceeds the smallest class ({present.min()})")
    pools = [np.flatnonzero(data.labels == c) for c in range(data.class_count)]
    out = {}
    for a, own in plan.assignments.items():
        if k == 0:
            out[a] = np.empty(0, dtype=np.int64)
            continue
        rng = np.random.default_rng([seed, a])
        mine = np.zeros(len(data), dtype=bool)
        mine[own] = True
        extra = []
        for pool in pools:
            foreign = pool[~mine[pool]]
            if foreign.size > k:
                foreign = np.sort(rng.choice(foreign, size=k, replace=False))
            extra.append(foreign)
        out[a] = np.concatenate(extra)
    return out


def apply_exchange(data: Dataset, plan: PartitionPlan, k: int, seed: int) -> dict:
    """Local datasets after a ``k``-per-class exchange: own shard plus received examples.

    Returns ``{agency: Dataset}``; ``data`` and ``plan`` are not modified.
    """
    received = exchange_indices(data, plan, k, seed)
    return {
        a: data.subset(np.concatenate([own, received[a]]))
        for a, own in plan.assignments.items()
    }
