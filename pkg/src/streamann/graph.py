"""Bounded-degree proximity graph with beam search and in-place inserts.

The graph lives in preallocated arrays sized by the dataset: one adjacency
row per potential id, a degree vector, and a membership byte per id
(absent / active / tombstoned).  All hot loops run as compiled kernels that
execute under the GIL, so each kernel call observes a consistent snapshot of
the arrays; mutations go through kernel helpers, which makes a node's
adjacency row replacement atomic from a searcher's point of view.
"""

from __future__ import annotations

import enum
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import Dataset, DistanceCounter, FormatError, Metric


class NodeState(enum.IntEnum):
    ABSENT = _kernels.MEMBER_ABSENT
    ACTIVE = _kernels.MEMBER_ACTIVE
    TOMBSTONED = _kernels.MEMBER_TOMBSTONE


class UnknownIdError(KeyError):
    """Raised for ids outside the dataset or not currently in the graph."""


class DuplicateIdError(ValueError):
    """Raised when inserting an id that is already a live graph node."""


@dataclass(frozen=True)
class BuildParams:
    """Construction knobs: degree bound, build beam width, prune slack."""

    degree_bound: int = 64
    l_build: int = 128
    alpha: float = 1.2

    def __post_init__(self) -> None:
        if self.degree_bound < 1:
            raise ValueError(f"degree_bound must be >= 1, got {self.degree_bound}")
        if self.l_build < 1:
            raise ValueError(f"l_build must be >= 1, got {self.l_build}")
        if self.alpha < 1.0:
            raise ValueError(f"alpha must be >= 1.0, got {self.alpha}")


@dataclass
class SearchResult:
    """Beam-search outcome.

    ``visited_*`` arrays hold every expanded node in expansion order, with a
    flag marking nodes that were tombstoned when expanded.  ``answer_*``
    arrays hold the k closest non-tombstoned visited nodes, sorted by
    (distance, id) ascending.
    """

    visited_ids: np.ndarray
    visited_dists: np.ndarray
    visited_tombstoned: np.ndarray
    answer_ids: np.ndarray
    answer_dists: np.ndarray

    @property
    def visited(self) -> list[tuple[int, float]]:
        return [(int(i), float(d)) for i, d in zip(self.visited_ids, self.visited_dists)]

    @property
    def answers(self) -> list[tuple[int, float]]:
        return [(int(i), float(d)) for i, d in zip(self.answer_ids, self.answer_dists)]


_EMPTY_I8 = np.empty(0, np.int64)
_EMPTY_F8 = np.empty(0, np.float64)
_EMPTY_U1 = np.empty(0, np.uint8)


@dataclass
class OpCounts:
    """Per-graph tally of update operations, used for regime audits."""

    inserts: int = 0
    lazy_deletes: int = 0
    inplace_deletes: int = 0
    baseline_consolidations: int = 0
    light_consolidations: int = 0


class Graph:
    """A mutable proximity graph over one dataset's row ids."""

    def __init__(self, dataset: Dataset, params: BuildParams | None = None,
                 seed: int = 0) -> None:
        self.dataset = dataset
        self.params = params if params is not None else BuildParams()
        self.seed = seed
        n = dataset.count
        self.adjacency = np.zeros((n, self.params.degree_bound), np.int32)
        self.degrees = np.zeros(n, np.int32)
        self.membership = np.zeros(n, np.uint8)
        self.start = -1
        self.tombstones: set[int] = set()
        self.removed_ids: set[int] = set()
        self.deletions_since_consolidation = 0
        self.counter = DistanceCounter()
        self.op_counts = OpCounts()
        self.update_lock = threading.RLock()
        self._n_active = 0
        self._n_tombstoned = 0
        self._start_epoch = 0

    # -- basic accessors ----------------------------------------------------

    @property
    def metric(self) -> Metric:
        return self.dataset.metric

    @property
    def alpha_eff(self) -> float:
        # the prune rule compares alpha * d(u, v) > d(u, p) on true euclidean
        # distances; on squared values the equivalent factor is alpha**2
        a = self.params.alpha
        return a * a if self.metric == Metric.SQUARED_EUCLIDEAN else a

    @property
    def active_count(self) -> int:
        return self._n_active

    @property
    def node_count(self) -> int:
        """Live nodes: active plus tombstoned."""
        return self._n_active + self._n_tombstoned

    @property
    def is_empty(self) -> bool:
        return self.node_count == 0

    def state(self, p: int) -> NodeState:
        self._check_id(p)
        return NodeState(int(self.membership[p]))

    def degree(self, p: int) -> int:
        self._check_id(p)
        return int(self.degrees[p])

    def neighbors(self, p: int) -> np.ndarray:
        self._check_id(p)
        return self.adjacency[p, : self.degrees[p]].astype(np.int64)

    def active_ids(self) -> np.ndarray:
        return np.flatnonzero(self.membership == int(NodeState.ACTIVE)).astype(np.int64)

    def _check_id(self, p: int) -> None:
        if not 0 <= p < self.dataset.count:
            raise UnknownIdError(f"id {p} outside dataset of {self.dataset.count} rows")

    # -- search -------------------------------------------------------------

    def greedy_search(self, query: np.ndarray, k: int, l: int) -> SearchResult:
        """Beam search; tombstoned nodes are navigated but never answered."""
        if not 1 <= k <= l:
            raise ValueError(f"need 1 <= k <= l, got k={k} l={l}")
        if self.is_empty or self.start < 0:
            return SearchResult(_EMPTY_I8, _EMPTY_F8, _EMPTY_U1, _EMPTY_I8, _EMPTY_F8)
        q = np.ascontiguousarray(query, dtype=np.float32)
        if q.shape != (self.dataset.dim,):
            raise ValueError(f"query shape {q.shape} does not match dim {self.dataset.dim}")
        vis_ids, vis_dists, vis_tomb, evals = _kernels.greedy_search(
            self.dataset.vectors, self.adjacency, self.degrees, self.membership,
            self.start, q, l, int(self.metric),
        )
        self.counter.add(int(evals))
        live = vis_tomb == 0
        cand_ids = vis_ids[live]
        cand_dists = vis_dists[live]
        order = np.lexsort((cand_ids, cand_dists))[:k]
        return SearchResult(vis_ids, vis_dists, vis_tomb,
                            cand_ids[order], cand_dists[order])

    # -- construction -------------------------------------------------------

    def robust_prune(self, p: int, candidates: np.ndarray,
                     degree_bound: int | None = None,
                     alpha: float | None = None) -> np.ndarray:
        """Diversified neighbor selection for ``p`` from ``candidates``.

        Drops ``p`` and duplicate ids, then greedily keeps the closest
        remaining candidate and discards candidates it dominates under the
        alpha slack rule.  Output is ordered by selection (closest first)
        and capped at the degree bound.
        """
        self._check_id(p)
        r = self.params.degree_bound if degree_bound is None else degree_bound
        if alpha is None:
            a_eff = self.alpha_eff
        else:
            a_eff = alpha * alpha if self.metric == Metric.SQUARED_EUCLIDEAN else alpha
        cand = np.asarray(candidates, dtype=np.int64)
        if cand.size == 0:
            return _EMPTY_I8.copy()
        out, evals = _kernels.robust_prune(
            self.dataset.vectors, p, cand, r, a_eff, int(self.metric))
        self.counter.add(int(evals))
        return out

    def insert(self, p: int) -> None:
        """Add point ``p``: search for its neighborhood, prune, back-link.

        The first point of an empty graph becomes the start node with an
        empty adjacency list.  Re-inserting an id that was previously
        removed is allowed; inserting a live id raises DuplicateIdError.
        """
        with self.update_lock:
            self._check_id(p)
            if self.membership[p] != int(NodeState.ABSENT):
                raise DuplicateIdError(f"id {p} is already a live graph node")
            self.removed_ids.discard(p)  # a revived id must not be stripped later
            if self.is_empty or self.start < 0:
                self.degrees[p] = 0
                self.membership[p] = int(NodeState.ACTIVE)
                self.start = int(p)
                self._n_active += 1
                self.op_counts.inserts += 1
                return
            res = self.greedy_search(self.dataset.vector(p), 1, self.params.l_build)
            nbrs = self.robust_prune(p, res.visited_ids)
            _kernels.store_row(self.adjacency, self.degrees, p, nbrs, nbrs.shape[0])
            self.membership[p] = int(NodeState.ACTIVE)
            self._n_active += 1
            evals = _kernels.add_backedges(
                self.dataset.vectors, self.adjacency, self.degrees, self.membership,
                p, nbrs, self.params.degree_bound, self.alpha_eff, int(self.metric))
            self.counter.add(int(evals))
            self.op_counts.inserts += 1

    # -- start-node maintenance ----------------------------------------------

    def reassign_start(self, exclude: int) -> int:
        """Move ``start`` to the active node closest to a sampled centroid.

        Draws a seeded sample of up to 1000 active ids (never ``exclude``),
        and picks the sample member closest to the sample centroid, ties to
        the smaller id.  Returns the new start, or -1 when no active node
        remains.  The evaluated distances are charged to the counter.
        """
        active = self.active_ids()
        active = active[active != exclude]
        if active.size == 0:
            self.start = -1
            self._start_epoch += 1
            return -1
        rng = np.random.default_rng([self.seed, self._start_epoch, int(exclude)])
        size = min(1000, active.size)
        sample = np.sort(rng.choice(active, size=size, replace=False))
        vecs = self.dataset.vectors[sample].astype(np.float64)
        centroid = vecs.mean(axis=0)
        if self.metric == Metric.SQUARED_EUCLIDEAN:
            dists = ((vecs - centroid) ** 2).sum(axis=1)
        else:
            dists = -(vecs * centroid).sum(axis=1)
        self.counter.add(int(sample.size))
        pick = np.lexsort((sample, dists))[0]
        self.start = int(sample[pick])
        self._start_epoch += 1
        return self.start

    # -- snapshot IO ----------------------------------------------------------

    _SNAP_HEADER = struct.Struct("<IIII")
    _NO_START = 0xFFFFFFFF

    def save(self, path) -> None:
        """Write slots, degree bound, start, metric, then per-slot rows."""
        with self.update_lock, open(path, "wb") as f:
            n = self.dataset.count
            start = self._NO_START if self.start < 0 else self.start
            f.write(self._SNAP_HEADER.pack(n, self.params.degree_bound, start, int(self.metric)))
            for p in range(n):
                deg = int(self.degrees[p])
                f.write(struct.pack("<BI", int(self.membership[p]), deg))
                f.write(self.adjacency[p, :deg].astype("<u4").tobytes())

    @classmethod
    def load(cls, path, dataset: Dataset, params: BuildParams | None = None,
             seed: int = 0) -> "Graph":
        """Read a snapshot; validates the degree bound on every row."""
        raw = open(path, "rb").read()
        hs = cls._SNAP_HEADER.size
        if len(raw) < hs:
            raise FormatError(f"{path}: truncated header, file ends at byte {len(raw)}")
        n, r_bound, start, metric_tag = cls._SNAP_HEADER.unpack_from(raw, 0)
        if n != dataset.count:
            raise FormatError(f"{path}: snapshot has {n} slots, dataset has {dataset.count}")
        if metric_tag != int(dataset.metric):
            raise FormatError(f"{path}: metric tag {metric_tag} does not match dataset")
        if params is None:
            params = BuildParams(degree_bound=r_bound, l_build=max(2 * r_bound, 16))
        elif params.degree_bound != r_bound:
            raise FormatError(f"{path}: snapshot degree bound {r_bound} != params {params.degree_bound}")
        g = cls(dataset, params, seed=seed)
        off = hs
        for p in range(n):
            if off + 5 > len(raw):
                raise FormatError(f"{path}: truncated slot {p} at byte {off}")
            member, deg = struct.unpack_from("<BI", raw, off)
            off += 5
            if member not in (0, 1, 2):
                raise FormatError(f"{path}: bad membership byte {member} at byte {off - 5}")
            if deg > r_bound:
                raise FormatError(
                    f"{path}: slot {p} degree {deg} exceeds bound {r_bound} at byte {off - 4}")
            end = off + 4 * deg
            if end > len(raw):
                raise FormatError(f"{path}: truncated row for slot {p} at byte {off}")
            row = np.frombuffer(raw, dtype="<u4", count=deg, offset=off)
            if deg and row.max() >= n:
                raise FormatError(f"{path}: slot {p} references id {row.max()} >= {n}")
            g.adjacency[p, :deg] = row
            g.degrees[p] = deg
            g.membership[p] = member
            off = end
        if off != len(raw):
            raise FormatError(f"{path}: trailing bytes start at byte {off}")
        if start == cls._NO_START:
            g.start = -1
        elif start >= n or g.membership[start] == int(NodeState.ABSENT):
            raise FormatError(f"{path}: start id {start} is not a live node")
        else:
            g.start = int(start)
        g._n_active = int((g.membership == int(NodeState.ACTIVE)).sum())
        g._n_tombstoned = int((g.membership == int(NodeState.TOMBSTONED)).sum())
        g.tombstones = set(np.flatnonzero(g.membership == int(NodeState.TOMBSTONED)).tolist())
        if (g.start < 0) != (g.node_count == 0):
            raise FormatError(f"{path}: start sentinel inconsistent with {g.node_count} live nodes")
        # dangling edges denote ids removed in place but not yet stripped
        referenced = np.unique(np.concatenate(
            [g.adjacency[p, : g.degrees[p]] for p in range(n) if g.degrees[p]]
        )) if g.degrees.any() else np.empty(0, np.int64)
        dangling = referenced[g.membership[referenced] == int(NodeState.ABSENT)]
        g.removed_ids = set(int(i) for i in dangling)
        return g


def rebuild_from_scratch(dataset: Dataset, active: np.ndarray,
                         params: BuildParams, seed: int) -> Graph:
    """Build a fresh graph over ``active`` ids, inserted in seeded order."""
    g = Graph(dataset, params, seed=seed)
    order = np.asarray(sorted(int(i) for i in active), dtype=np.int64)
    order = np.random.default_rng(seed).permutation(order)
    for p in order:
        g.insert(int(p))
    return g
