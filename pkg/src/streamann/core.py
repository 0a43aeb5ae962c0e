"""Vector storage, distance metrics, counters, and binary file IO."""

from __future__ import annotations

import enum
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels


class Metric(enum.IntEnum):
    """Distance functions; both are min-ordered (smaller means closer)."""

    SQUARED_EUCLIDEAN = _kernels.METRIC_L2
    NEGATIVE_INNER_PRODUCT = _kernels.METRIC_IP


class FormatError(ValueError):
    """Raised when a binary file does not match the expected layout."""


class DistanceCounter:
    """Exact count of distance evaluations, safe under concurrent updates."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._total = 0

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._total += n

    @property
    def total(self) -> int:
        return self._total

    def reset(self) -> None:
        with self._lock:
            self._total = 0


@dataclass
class Dataset:
    """An immutable collection of float32 vectors addressed by row index.

    ``vectors`` is a C-contiguous (count, dim) float32 matrix; row ``i`` is
    the vector for id ``i``.  Ids of every index built on top of a dataset
    are row indices into it.
    """

    vectors: np.ndarray
    metric: Metric = Metric.SQUARED_EUCLIDEAN

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"need count >= 1 and dim >= 1, got shape {v.shape}")
        self.vectors = v

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector(self, i: int) -> np.ndarray:
        return self.vectors[i]


def distance(a: np.ndarray, b: np.ndarray, metric: Metric,
             counter: DistanceCounter | None = None) -> float:
    """One distance evaluation between two vectors.

    Increments ``counter`` by exactly 1 when given.  Inputs are taken as
    float32; accumulation happens in float64 with a fixed term order.
    """
    av = np.ascontiguousarray(a, dtype=np.float32)
    bv = np.ascontiguousarray(b, dtype=np.float32)
    if av.shape != bv.shape or av.ndim != 1:
        raise ValueError(f"vectors must be 1-D with equal shape, got {av.shape} and {bv.shape}")
    if counter is not None:
        counter.add(1)
    return float(_kernels.dist_pair(av, bv, int(metric)))


_HEADER = struct.Struct("<II")


def save_vectors(dataset: Dataset, path: str | Path) -> None:
    """Write ``count, dim`` as little-endian u32 then the float32 rows."""
    with open(path, "wb") as f:
        f.write(_HEADER.pack(dataset.count, dataset.dim))
        f.write(np.ascontiguousarray(dataset.vectors, dtype="<f4").tobytes())


def _load_payload(path: str | Path, dtype: str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(
            f"{path}: truncated header, need {_HEADER.size} bytes, file ends at byte {len(raw)}"
        )
    count, dim = _HEADER.unpack_from(raw, 0)
    if count < 1 or dim < 1:
        raise FormatError(f"{path}: invalid header count={count} dim={dim} at byte 0")
    itemsize = np.dtype(dtype).itemsize
    expected = _HEADER.size + count * dim * itemsize
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload size mismatch, expected {expected} bytes for "
            f"count={count} dim={dim}, file ends at byte {len(raw)}"
        )
    arr = np.frombuffer(raw, dtype=dtype, count=count * dim, offset=_HEADER.size)
    return arr.reshape(count, dim).copy()


def load_vectors(path: str | Path, metric: Metric = Metric.SQUARED_EUCLIDEAN) -> Dataset:
    """Read a vector file written by :func:`save_vectors`."""
    return Dataset(_load_payload(path, "<f4"), metric=metric)


def save_ids(ids: np.ndarray, path: str | Path) -> None:
    """Write u32 ids with the standard header; 1-D input is stored with
    dim 1."""
    arr = np.ascontiguousarray(ids, dtype="<u4")
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"ids must be 1-D or 2-D, got shape {ids.shape}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())


def load_ids(path: str | Path) -> np.ndarray:
    """Read a u32 id file written by :func:`save_ids`.

    Single-column files come back 1-D, mirroring how they are usually
    written.
    """
    arr = _load_payload(path, "<u4")
    return arr[:, 0] if arr.shape[1] == 1 else arr


def generate_synthetic(count: int, dim: int, clusters: int, seed: int,
                       spread: float = 0.1,
                       metric: Metric = Metric.SQUARED_EUCLIDEAN,
                       center_seed: int | None = None) -> Dataset:
    """Draw ``count`` points from a mixture of isotropic Gaussians.

    Cluster centers are uniform in the unit hypercube and depend only on
    ``center_seed`` (default: ``seed``), so query sets can be drawn from the
    same mixture by reusing the dataset's center seed with a fresh ``seed``.
    Deterministic: identical arguments produce identical bytes.
    """
    if count < clusters or clusters < 1:
        raise ValueError(f"need count >= clusters >= 1, got count={count} clusters={clusters}")
    centers_rng = np.random.default_rng(seed if center_seed is None else center_seed)
    centers = centers_rng.uniform(0.0, 1.0, size=(clusters, dim))
    rng = np.random.default_rng(seed)
    assignment = rng.integers(0, clusters, size=count)
    noise = rng.standard_normal(size=(count, dim))
    points = centers[assignment] + spread * noise
    return Dataset(points.astype(np.float32), metric=metric)
