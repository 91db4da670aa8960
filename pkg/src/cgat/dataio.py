"""Synthetic multi-label dataset generation and binary persistence.

Samples live in [0,1]^d around class prototypes; labels are multi-hot
over C classes. Splits follow the retrieval convention: queries are
disjoint from the database, and the training set is a subset of the
database. The file container is fixed-layout little-endian with a magic
string and a version byte, so stale or corrupted files fail loudly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from cgat.serial import FormatError, Reader, atomic_write, check_magic

_DS_MAGIC = b"CGATDS"
_DS_VERSION = b"1"

_TAG_TRAIN = 1
_TAG_DATABASE = 2
_TAG_QUERY = 4


@dataclass
class GenSpec:
    n_classes: int = 8
    dim: int = 32
    n_train: int = 2000
    n_database: int = 4000
    n_query: int = 200
    noise: float = 0.05
    p_multilabel: float = 0.3
    prototype_spread: float = 0.09
    seed: int = 7

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least two classes (no negatives otherwise)")
        if min(self.n_train, self.n_database, self.n_query) <= 0:
            raise ValueError("split counts must be positive")
        if self.n_train > self.n_database:
            raise ValueError("training set must fit inside the database")
        if self.noise < 0:
            raise ValueError("noise scale must be >= 0")
        if not 0 < self.prototype_spread <= 0.3:
            raise ValueError("prototype spread must be in (0, 0.3]")


@dataclass
class Dataset:
    features: np.ndarray  # (N, d) float64 in [0,1]
    labels: np.ndarray  # (N, C) uint8 multi-hot
    train_ids: np.ndarray
    database_ids: np.ndarray
    query_ids: np.ndarray

    def __post_init__(self):
        self.validate()

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]

    def split(self, name: str):
        ids = {"train": self.train_ids, "database": self.database_ids, "query": self.query_ids}[name]
        return self.features[ids], self.labels[ids]

    def validate(self):
        feats, labels = self.features, self.labels
        if feats.ndim != 2 or labels.ndim != 2 or feats.shape[0] != labels.shape[0]:
            raise FormatError("features and labels must be aligned 2-D arrays")
        if not np.all(np.isfinite(feats)) or feats.min(initial=0.0) < 0 or feats.max(initial=0.0) > 1:
            raise FormatError("features must lie in [0,1]")
        if labels.size and not labels.any(axis=1).all():
            raise FormatError("every sample needs at least one active class")
        if np.intersect1d(self.query_ids, self.database_ids).size:
            raise FormatError("query and database ids must be disjoint")
        if not np.isin(self.train_ids, self.database_ids).all():
            raise FormatError("training ids must be a subset of the database")
        all_ids = np.concatenate([self.database_ids, self.query_ids])
        if all_ids.size and (all_ids.min() < 0 or all_ids.max() >= feats.shape[0]):
            raise FormatError("split ids out of range")


def generate(spec: GenSpec) -> Dataset:
    """Deterministic synthetic dataset from class prototypes plus noise.

    Prototypes are drawn uniformly in a band of half-width
    ``prototype_spread`` around 0.5 (at most [0.2, 0.8]^d); each sample
    picks one class, or two distinct classes with probability
    ``p_multilabel``, and its feature is the prototype average plus
    Gaussian noise, clipped to [0,1]. The spread default keeps the
    inter-class gaps on the scale an 8/255 perturbation budget can
    actually cross, which is what makes attack and defense measurable on
    synthetic data.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = 0.5 - spec.prototype_spread, 0.5 + spec.prototype_spread
    prototypes = rng.uniform(lo, hi, size=(spec.n_classes, spec.dim))
    n_total = spec.n_database + spec.n_query

    first = rng.integers(spec.n_classes, size=n_total)
    second_offset = rng.integers(1, spec.n_classes, size=n_total)
    second = (first + second_offset) % spec.n_classes
    is_multi = rng.random(n_total) < spec.p_multilabel

    labels = np.zeros((n_total, spec.n_classes), dtype=np.uint8)
    labels[np.arange(n_total), first] = 1
    labels[is_multi, second[is_multi]] = 1

    means = prototypes[first]
    means = np.where(is_multi[:, None], (prototypes[first] + prototypes[second]) / 2.0, means)
    features = np.clip(means + rng.normal(0.0, spec.noise, size=(n_total, spec.dim)), 0.0, 1.0)

    database_ids = np.arange(spec.n_database)
    query_ids = np.arange(spec.n_database, n_total)
    train_ids = np.sort(rng.choice(database_ids, size=spec.n_train, replace=False))
    return Dataset(features, labels, train_ids, database_ids, query_ids)


def _pack_labels(labels: np.ndarray) -> bytes:
    return np.packbits(labels.astype(np.uint8), axis=1, bitorder="little").tobytes()


def save_dataset(ds: Dataset, path):
    n, d = ds.features.shape
    c = ds.labels.shape[1]
    tags = np.zeros(n, dtype=np.uint8)
    tags[ds.train_ids] |= _TAG_TRAIN
    tags[ds.database_ids] |= _TAG_DATABASE
    tags[ds.query_ids] |= _TAG_QUERY
    parts = [
        _DS_MAGIC,
        _DS_VERSION,
        struct.pack("<QIIIII", n, d, c, len(ds.train_ids), len(ds.database_ids), len(ds.query_ids)),
        np.ascontiguousarray(ds.features, dtype="<f8").tobytes(),
        _pack_labels(ds.labels),
        tags.tobytes(),
    ]
    atomic_write(path, b"".join(parts))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        reader = Reader(f.read(), "dataset")
    check_magic(reader, _DS_MAGIC, _DS_VERSION, "dataset")
    n, d, c, n_train, n_db, n_query = reader.unpack("<QIIIII")
    features = np.frombuffer(reader.take(n * d * 8), dtype="<f8").reshape(n, d).copy()
    label_bytes = (c + 7) // 8
    packed = np.frombuffer(reader.take(n * label_bytes), dtype=np.uint8).reshape(n, label_bytes)
    labels = np.unpackbits(packed, axis=1, bitorder="little", count=c).astype(np.uint8)
    tags = np.frombuffer(reader.take(n), dtype=np.uint8)
    reader.expect_eof()
    ids = np.arange(n)
    ds = Dataset(
        features,
        labels,
        train_ids=ids[(tags & _TAG_TRAIN) != 0],
        database_ids=ids[(tags & _TAG_DATABASE) != 0],
        query_ids=ids[(tags & _TAG_QUERY) != 0],
    )
    for name, expected, got in (
        ("train", n_train, len(ds.train_ids)),
        ("database", n_db, len(ds.database_ids)),
        ("query", n_query, len(ds.query_ids)),
    ):
        if expected != got:
            raise FormatError(f"{name} split count mismatch: header {expected}, tags {got}")
    return ds
