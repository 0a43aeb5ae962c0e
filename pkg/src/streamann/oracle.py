"""Exact nearest-neighbor ground truth and recall measurement.

The brute-force path here is the measurement apparatus: it runs on plain
numpy in float64, charges nothing to any distance counter, and orders by
(distance, id) exactly like the graph search does.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, FormatError, Metric


@dataclass
class QuerySet:
    """Query vectors, float32, one row per query."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"queries must be 2-D, got shape {v.shape}")
        self.vectors = v

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "QuerySet":
        return cls(dataset.vectors)


@dataclass
class GroundTruth:
    """Exact top-k ids and distances per query, (distance, id) ordered."""

    k: int
    ids: np.ndarray     # (n_queries, k) int64
    dists: np.ndarray   # (n_queries, k) float64

    @property
    def count(self) -> int:
        return self.ids.shape[0]

    def entry(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        return self.ids[q], self.dists[q]


def brute_force_knn(dataset: Dataset, active: np.ndarray,
                    queries: QuerySet | np.ndarray, k: int,
                    chunk_elems: int = 20_000_000) -> GroundTruth:
    """Exact k nearest active points per query by full scan.

    Requires at least k active points so every ground-truth row has exactly
    k entries.  Ties in distance break toward the smaller id.  Queries are
    processed in chunks capped at ``chunk_elems`` distance-matrix entries
    to bound peak memory.
    """
    if not isinstance(queries, QuerySet):
        queries = QuerySet(queries)
    ids = np.sort(np.asarray(active, dtype=np.int64))
    if ids.size < k or k < 1:
        raise ValueError(f"need 1 <= k <= active count, got k={k} active={ids.size}")
    pts = dataset.vectors[ids].astype(np.float64)
    out_ids = np.empty((queries.count, k), np.int64)
    out_dists = np.empty((queries.count, k), np.float64)
    chunk = max(1, int(chunk_elems) // max(1, ids.size))
    qv = queries.vectors.astype(np.float64)
    for lo in range(0, queries.count, chunk):
        q = qv[lo : lo + chunk]
        if dataset.metric == Metric.SQUARED_EUCLIDEAN:
            d = ((q[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        else:
            d = -(q @ pts.T)
        for r in range(d.shape[0]):
            order = np.lexsort((ids, d[r]))[:k]
            out_ids[lo + r] = ids[order]
            out_dists[lo + r] = d[r][order]
    return GroundTruth(k, out_ids, out_dists)


def recall_at_k(answer_ids: np.ndarray, answer_dists: np.ndarray,
                gt_ids: np.ndarray, gt_dists: np.ndarray, k: int) -> float:
    """Fraction of the true top-k recovered, always divided by k.

    An answer counts when its id is in the ground-truth top-k or when its
    distance ties the k-th ground-truth distance (relative window 1e-6), so
    exchanging equidistant neighbors is never penalized.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    g = set(int(i) for i in gt_ids[:k])
    kth = float(gt_dists[min(k, len(gt_dists)) - 1])
    window = kth + abs(kth) * 1e-6
    hits = 0
    for i, d in zip(answer_ids[:k], answer_dists[:k]):
        if int(i) in g or float(d) <= window:
            hits += 1
    return hits / k


_GT_HEADER = struct.Struct("<II")


def save_ground_truth(gt: GroundTruth, path: str | Path) -> None:
    """Header (query count, k), then the id block (u32) and distance block
    (f32), each query-major."""
    with open(path, "wb") as f:
        f.write(_GT_HEADER.pack(gt.count, gt.k))
        f.write(np.ascontiguousarray(gt.ids, dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(gt.dists, dtype="<f4").tobytes())


def load_ground_truth(path: str | Path) -> GroundTruth:
    raw = Path(path).read_bytes()
    if len(raw) < _GT_HEADER.size:
        raise FormatError(f"{path}: truncated header, file ends at byte {len(raw)}")
    count, k = _GT_HEADER.unpack_from(raw, 0)
    if count < 1 or k < 1:
        raise FormatError(f"{path}: invalid header count={count} k={k} at byte 0")
    ids_bytes = count * k * 4
    expected = _GT_HEADER.size + 2 * ids_bytes
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload size mismatch, expected {expected} bytes for "
            f"count={count} k={k}, file ends at byte {len(raw)}")
    ids = np.frombuffer(raw, "<u4", count * k, offset=_GT_HEADER.size)
    dists = np.frombuffer(raw, "<f4", count * k, offset=_GT_HEADER.size + ids_bytes)
    return GroundTruth(k, ids.reshape(count, k).astype(np.int64),
                       dists.reshape(count, k).astype(np.float64))
