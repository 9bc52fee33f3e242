"""Client datasets: synthetic Gaussian classes, Dirichlet label skew,
train/test splits and MNIST-style IDX ingestion."""

import csv
import struct
from dataclasses import dataclass

import numpy as np

from ._validation import check_int, check_positive
from .exceptions import FormatError, ParameterError, PartitionError, SplitError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MAX_PARTITION_RETRIES = 100


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ParameterError("features must be a 2-D matrix")
        if len(self.features) != len(self.labels):
            raise ParameterError(
                f"{len(self.features)} feature rows but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ParameterError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass
class ClientShard:
    client_id: int
    train: Dataset
    test: Dataset


@dataclass(frozen=True)
class PartitionSpec:
    n_clients: int
    dirichlet_alpha: float = 0.1
    seed: int = 0

    def __post_init__(self):
        check_int(self.n_clients, "n_clients", minimum=1)
        check_positive(self.dirichlet_alpha, "dirichlet_alpha")


def gen_synthetic(n_classes, dim, per_class_count, cluster_spread=1.0, seed=0, means=None):
    """Isotropic Gaussian blob per class.

    Class means are standard normal draws (distinct almost surely) unless
    ``means`` fixes them; samples add ``cluster_spread`` times white noise.
    Rows are ordered by class.
    """
    n_classes = check_int(n_classes, "n_classes", minimum=1)
    dim = check_int(dim, "dim", minimum=1)
    per_class_count = check_int(per_class_count, "per_class_count")
    check_positive(cluster_spread, "cluster_spread", strict=False)
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_classes, dim)) if means is None else np.asarray(means, float)
    if centers.shape != (n_classes, dim):
        raise ParameterError(f"means must have shape {(n_classes, dim)}")
    noise = rng.standard_normal((n_classes * per_class_count, dim))
    labels = np.repeat(np.arange(n_classes), per_class_count)
    return Dataset(centers[labels] + cluster_spread * noise, labels, n_classes)


def dirichlet_partition(dataset, spec, min_size=1):
    """Label-skew partition: each class's samples are spread over clients with
    Dirichlet(alpha) proportions. Returns one sorted index array per client.

    A draw that leaves some client with fewer than ``min_size`` samples is
    redrawn, at most 100 times.
    """
    if len(dataset) == 0:
        raise PartitionError("cannot partition an empty dataset")
    n = spec.n_clients
    if n == 1:
        return [np.arange(len(dataset))]
    min_size = check_int(min_size, "min_size", minimum=1)
    if len(dataset) < n * min_size:
        raise PartitionError(f"{len(dataset)} samples cannot give {n} clients {min_size} each")
    rng = np.random.default_rng(spec.seed)
    by_class = [np.flatnonzero(dataset.labels == c) for c in range(dataset.n_classes)]
    for _ in range(MAX_PARTITION_RETRIES):
        parts = [[] for _ in range(n)]
        for idx in by_class:
            if len(idx) == 0:
                continue
            idx = rng.permutation(idx)
            props = rng.dirichlet(np.full(n, spec.dirichlet_alpha))
            cuts = (np.cumsum(props)[:-1] * len(idx)).astype(np.int64)
            for client, chunk in enumerate(np.split(idx, cuts)):
                parts[client].append(chunk)
        out = [np.sort(np.concatenate(p)) for p in parts]
        if all(len(p) >= min_size for p in out):
            return out
    raise PartitionError(
        f"no draw in {MAX_PARTITION_RETRIES} attempts gave every client {min_size} sample(s) "
        f"(alpha={spec.dirichlet_alpha}, n_clients={n})")


def split(dataset, train_fraction=0.75, seed=0):
    """Random disjoint split with round(fraction * n) training rows (at least
    one row on each side)."""
    if not 0 < train_fraction < 1:
        raise ParameterError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n < 2:
        raise SplitError(f"need at least 2 samples to split, got {n}")
    n_train = int(np.floor(train_fraction * n + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


def standardize(fit_on, *others):
    """Scale features to zero mean / unit variance using ``fit_on`` statistics."""
    mean = fit_on.features.mean(axis=0)
    std = fit_on.features.std(axis=0)
    std[std == 0] = 1.0
    return tuple(Dataset((d.features - mean) / std, d.labels, d.n_classes) for d in (fit_on, *others))


def make_client_shards(dataset, spec, train_fraction=0.75, ids=None):
    """Partition, split each client 75/25 (by default) and standardize every
    shard with statistics pooled over all training splits. Every client gets
    at least two samples so both sides of its split are non-empty."""
    parts = dirichlet_partition(dataset, spec, min_size=2)
    ids = list(range(spec.n_clients)) if ids is None else list(ids)
    pairs = [split(dataset.subset(p), train_fraction, seed=spec.seed + 1 + k)
             for k, p in enumerate(parts)]
    pooled = Dataset(np.vstack([tr.features for tr, _ in pairs]),
                     np.concatenate([tr.labels for tr, _ in pairs]), dataset.n_classes)
    mean = pooled.features.mean(axis=0)
    std = pooled.features.std(axis=0)
    std[std == 0] = 1.0

    def scale(d):
        return Dataset((d.features - mean) / std, d.labels, d.n_classes)

    return {cid: ClientShard(cid, scale(tr), scale(te)) for cid, (tr, te) in zip(ids, pairs)}


def _read_idx(path, magic, ndim):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 4 * ndim:
        raise FormatError("truncated IDX header", path)
    got = struct.unpack(">I", blob[:4])[0]
    if got != magic:
        raise FormatError(f"bad magic 0x{got:08x}, expected 0x{magic:08x}", path)
    dims = struct.unpack(f">{ndim}I", blob[4:4 + 4 * ndim])
    body = blob[4 + 4 * ndim:]
    expected = int(np.prod(dims))
    if len(body) != expected:
        raise FormatError(f"payload has {len(body)} bytes, header promises {expected}", path)
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, n_classes=10):
    """Read MNIST-format IDX image/label files into a :class:`Dataset`.

    Pixels are flattened per image and scaled to [0, 1].
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels", labels_path)
    if len(labels) and labels.max() >= n_classes:
        raise FormatError(f"label {labels.max()} exceeds n_classes={n_classes}", labels_path)
    feats = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(feats, labels.astype(np.int64), n_classes)


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 arrays as IDX files (used for fixtures and round trips)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">I3I", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def export_csv(dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(dataset.dim)] + ["label"])
        for row, y in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(y)])
