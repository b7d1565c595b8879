"""Dataset container and loaders: synthetic Gaussian blobs, IDX pairs, CSV."""

from __future__ import annotations

import csv as csv_module
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError, DomainError


@dataclass(frozen=True)
class Dataset:
    """Flat float64 samples with integer class labels.

    sample_shape records the natural shape of one sample (for example
    (1, 8, 8) for single-channel images); its product always equals the
    feature count.
    """

    samples: np.ndarray
    labels: np.ndarray
    class_count: int
    sample_shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "sample_shape", tuple(int(d) for d in self.sample_shape))
        if self.samples.ndim != 2:
            raise DatasetError(f"samples must be 2-D, got shape {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise DatasetError("labels must be one integer per sample")
        if int(np.prod(self.sample_shape)) != self.samples.shape[1]:
            raise DatasetError(
                f"sample_shape {self.sample_shape} does not cover "
                f"{self.samples.shape[1]} features"
            )
        if self.class_count < 2:
            raise DatasetError("datasets need at least two classes")
        if self.samples.shape[0] and (
            self.labels.min() < 0 or self.labels.max() >= self.class_count
        ):
            raise DatasetError(f"labels must lie in [0, {self.class_count})")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.samples[idx], self.labels[idx], self.class_count, self.sample_shape)

    def sample_shape_for_net(self):
        """Shape to hand conv-first networks; None for flat data."""
        return self.sample_shape if len(self.sample_shape) == 3 else None


@dataclass(frozen=True)
class DataSplit:
    train: Dataset
    test: Dataset


def synthetic_blobs(classes, dim, n, seed, *, noise=1.0, sample_shape=None) -> DataSplit:
    """Gaussian class blobs, generated normalized; fixed 80/20 split."""
    if classes < 2 or dim < 1 or n < classes:
        raise DomainError("blobs need classes >= 2, dim >= 1, n >= classes")
    rng = np.random.default_rng([int(seed), 93])
    centers = rng.normal(0.0, 1.0, (classes, dim))
    labels = rng.permutation(np.arange(n) % classes)
    samples = centers[labels] + rng.normal(0.0, noise, (n, dim))
    shape = tuple(sample_shape) if sample_shape is not None else (dim,)
    if int(np.prod(shape)) != dim:
        raise DomainError(f"sample_shape {shape} does not cover dim {dim}")
    split = int(0.8 * n)
    train = Dataset(samples[:split], labels[:split], classes, shape)
    test = Dataset(samples[split:], labels[split:], classes, shape)
    return DataSplit(train, test)


def _read_idx(path) -> np.ndarray:
    """Parse one big-endian IDX file of unsigned bytes."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise DatasetError(f"{path}: truncated header at byte 0 (need 4 magic bytes)")
    if raw[0] != 0 or raw[1] != 0:
        raise DatasetError(f"{path}: bad magic at byte 0 (expected two zero bytes)")
    if raw[2] != 0x08:
        raise DatasetError(f"{path}: unsupported type code 0x{raw[2]:02x} at byte 2")
    ndim = raw[3]
    if ndim < 1:
        raise DatasetError(f"{path}: zero-dimensional payload declared at byte 3")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise DatasetError(f"{path}: truncated dimension table at byte {len(raw)}")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    expected = int(np.prod(dims))
    if len(raw) - header_end != expected:
        raise DatasetError(
            f"{path}: expected {expected} payload bytes at byte {header_end}, "
            f"found {len(raw) - header_end}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(dims)


def _idx_pair(images_path, labels_path):
    images = _read_idx(images_path)
    labels = _read_idx(labels_path)
    if images.ndim < 2:
        raise DatasetError(f"{images_path}: image payload needs at least 2 dims")
    if labels.ndim != 1:
        raise DatasetError(f"{labels_path}: label payload must be 1-D")
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(
            f"{images_path} holds {images.shape[0]} images but "
            f"{labels_path} holds {labels.shape[0]} labels"
        )
    flat = images.reshape(images.shape[0], -1).astype(np.float64)
    shape = (1, *images.shape[1:]) if images.ndim == 3 else images.shape[1:]
    return flat, labels.astype(np.int64), tuple(int(d) for d in shape)


def load_idx_split(train_images, train_labels, test_images, test_labels) -> DataSplit:
    """Two IDX pairs, normalized per feature with train statistics."""
    xtr, ytr, shape = _idx_pair(train_images, train_labels)
    xte, yte, shape_te = _idx_pair(test_images, test_labels)
    if shape != shape_te:
        raise DatasetError(f"train shape {shape} differs from test shape {shape_te}")
    classes = int(max(ytr.max(), yte.max())) + 1
    mu = xtr.mean(axis=0)
    sd = xtr.std(axis=0)
    sd[sd < 1e-12] = 1.0
    xtr = (xtr - mu) / sd
    xte = (xte - mu) / sd
    return DataSplit(
        Dataset(xtr, ytr, classes, shape), Dataset(xte, yte, classes, shape)
    )


def load_csv(path, *, test_fraction=0.2) -> DataSplit:
    """Numeric CSV, last column is the integer label; fixed shuffled 80/20 split."""
    rows = []
    with open(path, newline="") as f:
        reader = csv_module.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and _looks_like_header(row)):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from None
    if len(rows) < 2:
        raise DatasetError(f"{path}: needs at least two data rows")
    width = len(rows[0])
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DatasetError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
    arr = np.asarray(rows, dtype=np.float64)
    features, labels_f = arr[:, :-1], arr[:, -1]
    labels = labels_f.astype(np.int64)
    if not np.array_equal(labels_f, labels) or labels.min() < 0:
        raise DatasetError(f"{path}: labels must be non-negative integers")
    classes = int(labels.max()) + 1
    if classes < 2:
        raise DatasetError(f"{path}: needs at least two classes")
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    sd[sd < 1e-12] = 1.0
    features = (features - mu) / sd

    order = np.random.default_rng(2_000_003).permutation(len(rows))
    split = int(round((1.0 - test_fraction) * len(rows)))
    tr, te = order[:split], order[split:]
    shape = (features.shape[1],)
    return DataSplit(
        Dataset(features[tr], labels[tr], classes, shape),
        Dataset(features[te], labels[te], classes, shape),
    )


def _looks_like_header(row):
    for v in row:
        try:
            float(v)
        except ValueError:
            return True
    return False


def load_dataset(source: dict) -> DataSplit:
    """Dispatch on source["kind"]: synthetic-blobs | idx-files | csv."""
    if not isinstance(source, dict) or "kind" not in source:
        raise DatasetError("dataset source must be a mapping with a 'kind'")
    kind = source["kind"]
    if kind == "synthetic-blobs":
        return synthetic_blobs(
            int(source.get("classes", 3)),
            int(source.get("dim", 16)),
            int(source.get("n", 600)),
            int(source.get("seed", 0)),
            noise=float(source.get("noise", 1.0)),
            sample_shape=source.get("shape"),
        )
    if kind == "idx-files":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if key not in source:
                raise DatasetError(f"idx-files source needs {key!r}")
        return load_idx_split(
            source["train_images"],
            source["train_labels"],
            source["test_images"],
            source["test_labels"],
        )
    if kind == "csv":
        if "path" not in source:
            raise DatasetError("csv source needs a 'path'")
        return load_csv(source["path"])
    raise DatasetError(f"unknown dataset kind {kind!r}")
