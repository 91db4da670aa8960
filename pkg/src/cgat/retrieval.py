"""Hamming-space retrieval index and the evaluation protocol.

Database codes are bit-packed (one bit per +/-1 entry) and compared by
XOR + popcount. Rankings sort by ascending distance with ties broken by
ascending database id, so results are identical across runs and worker
counts. Metrics: MAP restricted to the top-N ranked items, PR curves,
and P@N curves, each averaged over queries.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from cgat.serial import atomic_write

_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1).astype(np.int64)


class HammingIndex:
    """Immutable bit-packed index over database codes and labels."""

    def __init__(self, codes: np.ndarray, labels: np.ndarray):
        codes = np.asarray(codes)
        labels = np.array(labels, dtype=np.float64)
        if codes.ndim != 2 or labels.ndim != 2:
            raise ValueError("codes and labels must be 2-D (use shape (0, K) for an empty database)")
        if codes.shape[0] != labels.shape[0]:
            raise ValueError("codes and labels must be aligned")
        self.n_bits = codes.shape[1]
        self.labels = labels
        self._packed = np.packbits((codes > 0).astype(np.uint8), axis=1)
        self._packed.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self):
        return self._packed.shape[0]

    def distances(self, query_code: np.ndarray) -> np.ndarray:
        """Hamming distance from the query to every database code."""
        query_code = np.asarray(query_code)
        if query_code.shape != (self.n_bits,):
            raise ValueError(f"query code length {query_code.shape} does not match K={self.n_bits}")
        packed_q = np.packbits((query_code > 0).astype(np.uint8))
        return _POPCOUNT[np.bitwise_xor(self._packed, packed_q)].sum(axis=1)

    def rank(self, query_code: np.ndarray) -> np.ndarray:
        """Database ids by ascending distance, ties by ascending id."""
        return np.argsort(self.distances(query_code), kind="stable")


def build_index(codes, labels) -> HammingIndex:
    return HammingIndex(codes, labels)


@dataclass
class MetricsReport:
    map_at_n: float
    pr_points: list  # (recall, precision)
    pn_points: list  # (N, precision)
    top_n: int
    query_count: int

    def to_csv(self, path):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["metric", "x", "y"])
        writer.writerow(["map", self.top_n, repr(self.map_at_n)])
        writer.writerow(["query_count", "", self.query_count])
        for recall, precision in self.pr_points:
            writer.writerow(["pr", repr(recall), repr(precision)])
        for n, precision in self.pn_points:
            writer.writerow(["p_at_n", n, repr(precision)])
        atomic_write(path, buf.getvalue().encode())

    def summary(self) -> str:
        lines = [
            f"queries            {self.query_count}",
            f"map@{self.top_n:<14} {self.map_at_n:.6f}",
        ]
        for n, precision in self.pn_points:
            lines.append(f"p@{n:<16} {precision:.6f}")
        return "\n".join(lines)


def _relevance(index: HammingIndex, order: np.ndarray, query_label: np.ndarray) -> np.ndarray:
    return (index.labels[order] @ np.asarray(query_label, dtype=np.float64) > 0).astype(np.float64)


def average_precision(relevance: np.ndarray, top_n: int, denominator: str = "in_top_n") -> float:
    """AP over a ranked 0/1 relevance vector, restricted to the top N.

    ``denominator`` picks the normalization: ``in_top_n`` divides by the
    number of relevant items inside the window (the common deep-hashing
    convention); ``min_full`` divides by min(total relevant, top_n).
    Zero relevant items in the window (or overall) gives AP = 0.
    """
    window = relevance[:top_n]
    hits = np.cumsum(window)
    ranks = np.arange(1, len(window) + 1)
    gain = float((window * hits / ranks).sum())
    if denominator == "in_top_n":
        denom = float(window.sum())
    elif denominator == "min_full":
        denom = float(min(relevance.sum(), top_n))
    else:
        raise ValueError(f"unknown AP denominator {denominator!r}")
    return gain / denom if denom > 0 else 0.0


def mean_average_precision(index, query_codes, query_labels, top_n, denominator="in_top_n", workers=1) -> float:
    """Mean AP over queries within the top-N ranked database items."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    query_codes = np.atleast_2d(np.asarray(query_codes))
    query_labels = np.atleast_2d(np.asarray(query_labels))
    if query_codes.shape[0] == 0:
        raise ValueError("no queries")

    def one(i):
        order = index.rank(query_codes[i])
        return average_precision(_relevance(index, order, query_labels[i]), top_n, denominator)

    aps = _map_queries(one, query_codes.shape[0], workers)
    return float(np.mean(aps))


def pr_curve(index, query_codes, query_labels, workers=1):
    """(recall, precision) averaged over queries at every rank depth.

    Queries with no relevant database item contribute zeros at every
    depth. Recall is non-decreasing along the returned sequence.
    """
    query_codes = np.atleast_2d(np.asarray(query_codes))
    query_labels = np.atleast_2d(np.asarray(query_labels))
    if query_codes.shape[0] == 0:
        raise ValueError("no queries")
    n_db = len(index)
    if n_db == 0:
        return []
    ranks = np.arange(1, n_db + 1)

    def one(i):
        order = index.rank(query_codes[i])
        rel = _relevance(index, order, query_labels[i])
        hits = np.cumsum(rel)
        total = max(rel.sum(), 1.0)
        return hits / total, hits / ranks

    rows = _map_queries(one, query_codes.shape[0], workers)
    recall = np.mean([r for r, _ in rows], axis=0)
    precision = np.mean([p for _, p in rows], axis=0)
    return list(zip(recall.tolist(), precision.tolist()))


def p_at_n_curve(index, query_codes, query_labels, n_grid, workers=1):
    """Mean precision at each cutoff in ``n_grid``."""
    query_codes = np.atleast_2d(np.asarray(query_codes))
    query_labels = np.atleast_2d(np.asarray(query_labels))
    if query_codes.shape[0] == 0:
        raise ValueError("no queries")
    n_grid = [int(n) for n in n_grid]

    def one(i):
        order = index.rank(query_codes[i])
        rel = _relevance(index, order, query_labels[i])
        hits = np.cumsum(rel)
        return [hits[min(n, len(rel)) - 1] / n if len(rel) else 0.0 for n in n_grid]

    rows = np.asarray(_map_queries(one, query_codes.shape[0], workers))
    return list(zip(n_grid, rows.mean(axis=0).tolist()))


def evaluate(index, query_codes, query_labels, top_n=500, n_grid=None, denominator="in_top_n", workers=1) -> MetricsReport:
    """Full protocol: MAP@top_n plus PR and P@N curves."""
    if n_grid is None:
        step = max(1, len(index) // 20)
        n_grid = list(range(step, len(index) + 1, step)) or [1]
    return MetricsReport(
        map_at_n=mean_average_precision(index, query_codes, query_labels, top_n, denominator, workers),
        pr_points=pr_curve(index, query_codes, query_labels, workers),
        pn_points=p_at_n_curve(index, query_codes, query_labels, n_grid, workers),
        top_n=top_n,
        query_count=np.atleast_2d(np.asarray(query_codes)).shape[0],
    )


def _map_queries(fn, n, workers):
    """Apply fn over query indices with a deterministic reduction order."""
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))
