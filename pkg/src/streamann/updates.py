"""Deletion regimes and consolidation.

Two mutually exclusive ways to remove points from a graph:

* lazy delete + full consolidation: removals are tombstoned and stay
  navigable; a periodic sweep splices tombstoned neighborhoods shut,
  re-prunes every surviving node, and drops the tombstones.
* in-place delete + light consolidation: each removal patches the local
  neighborhood immediately (replacement edges drawn from a fresh search)
  and frees the node; the periodic sweep merely strips dangling ids from
  adjacency lists and performs no distance work at all.

An index runs one regime for its whole life; the harness enforces that and
``Graph.op_counts`` makes it auditable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import Metric
from .graph import BuildParams, Graph, NodeState, UnknownIdError


@dataclass(frozen=True)
class DeleteParams:
    """Knobs for in-place deletion.

    ``l_delete`` is the beam width of the repair search, ``k_candidates``
    how many nearby active nodes it returns as replacement-edge candidates,
    and ``c`` how many of those each affected neighbor receives.
    """

    l_delete: int = 128
    k_candidates: int = 50
    c: int = 3

    def __post_init__(self) -> None:
        if not 1 <= self.k_candidates <= self.l_delete:
            raise ValueError(
                f"need 1 <= k_candidates <= l_delete, got k={self.k_candidates} l={self.l_delete}")
        if self.c < 1:
            raise ValueError(f"c must be >= 1, got {self.c}")


class ConsolidationMode(enum.Enum):
    BASELINE = "baseline"
    LIGHT = "light"


@dataclass(frozen=True)
class ConsolidationPolicy:
    """Fire a consolidation once deletions reach a fraction of the index."""

    threshold: float = 0.2
    mode: ConsolidationMode = ConsolidationMode.LIGHT

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")


@dataclass
class DeleteStats:
    """Instrumentation returned by :func:`inplace_delete`."""

    edges_added: int
    in_neighbors: int
    out_neighbors: int
    candidates: int


def lazy_delete(graph: Graph, p: int) -> None:
    """Tombstone an active node; it stays navigable until consolidation."""
    with graph.update_lock:
        graph._check_id(p)
        if graph.membership[p] != int(NodeState.ACTIVE):
            raise UnknownIdError(f"id {p} is not an active node")
        graph.membership[p] = int(NodeState.TOMBSTONED)
        graph.tombstones.add(int(p))
        graph._n_active -= 1
        graph._n_tombstoned += 1
        graph.deletions_since_consolidation += 1
        graph.op_counts.lazy_deletes += 1


def consolidate_baseline(graph: Graph, params: BuildParams | None = None) -> None:
    """Remove every tombstone by splicing and re-pruning all survivors.

    For each active node, the live out-neighbors of each tombstoned
    out-neighbor are spliced into its list, tombstoned entries are dropped,
    and the merged list is re-pruned to the degree bound.  Afterwards all
    tombstoned nodes are gone and no surviving edge references them.  With
    no tombstones the call returns with the graph untouched.
    """
    if params is None:
        params = graph.params
    with graph.update_lock:
        if not graph.tombstones:
            graph.deletions_since_consolidation = 0
            graph.op_counts.baseline_consolidations += 1
            return
        if graph.start >= 0 and graph.membership[graph.start] == int(NodeState.TOMBSTONED):
            graph.reassign_start(exclude=graph.start)
        a = params.alpha
        a_eff = a * a if graph.metric == Metric.SQUARED_EUCLIDEAN else a
        evals = _kernels.consolidate_sweep(
            graph.dataset.vectors, graph.adjacency, graph.degrees, graph.membership,
            params.degree_bound, a_eff, int(graph.metric))
        graph.counter.add(int(evals))
        for t in graph.tombstones:
            graph.membership[t] = int(NodeState.ABSENT)
            graph.degrees[t] = 0
        graph._n_tombstoned -= len(graph.tombstones)
        graph.tombstones.clear()
        graph.deletions_since_consolidation = 0
        graph.op_counts.baseline_consolidations += 1


def inplace_delete(graph: Graph, p: int, params: DeleteParams | None = None) -> DeleteStats:
    """Remove an active node immediately, patching its neighborhood.

    A repair search around the departing point yields replacement
    candidates.  Every visited in-neighbor of ``p`` swaps its edge to ``p``
    for edges to the ``c`` candidates closest to itself; every live
    out-neighbor of ``p`` receives a back-edge from the ``c`` candidates
    closest to it.  Touched nodes whose lists overflow are re-pruned at the
    end of the call, so the degree bound holds between operations.

    Deleting the start node follows the pinned-start policy: the node is
    tombstoned (still navigable), the start moves to an active node chosen
    by a seeded centroid sample, and the next light consolidation finishes
    the removal.
    """
    if params is None:
        params = DeleteParams()
    with graph.update_lock:
        graph._check_id(p)
        if graph.membership[p] != int(NodeState.ACTIVE):
            raise UnknownIdError(f"id {p} is not an active node")
        pinned = p == graph.start

        res = graph.greedy_search(
            graph.dataset.vector(p), params.k_candidates, params.l_delete)
        cand = res.answer_ids[res.answer_ids != p]
        visited = res.visited_ids[res.visited_ids != p]

        mask = _kernels.in_neighbors_among(graph.adjacency, graph.degrees, visited, p)
        n_in = np.sort(visited[mask == 1])

        vectors = graph.dataset.vectors
        metric = int(graph.metric)
        staged: dict[int, list[int]] = {}

        absent = int(NodeState.ABSENT)

        def row_of(v: int) -> list[int]:
            # drop dangling ids on the way in: they would otherwise compete
            # in the prune below and evict the live replacements
            lst = staged.get(v)
            if lst is None:
                lst = [int(x) for x in graph.adjacency[v, : graph.degrees[v]]
                       if graph.membership[x] != absent]
                staged[v] = lst
            return lst

        edges_added = 0
        for z in n_in:
            z = int(z)
            repl, evals = _kernels.closest_subset(vectors, z, cand, params.c, z, metric)
            graph.counter.add(int(evals))
            lst = [x for x in row_of(z) if x != p]
            for y in repl:
                y = int(y)
                if y not in lst:
                    lst.append(y)
                    edges_added += 1
            staged[z] = lst

        out_nbrs = [int(w) for w in graph.neighbors(p)
                    if graph.membership[w] != int(NodeState.ABSENT)]
        for w in out_nbrs:
            targets, evals = _kernels.closest_subset(vectors, w, cand, params.c, w, metric)
            graph.counter.add(int(evals))
            for y in targets:
                y = int(y)
                lst = row_of(y)
                if w not in lst:
                    lst.append(w)
                    edges_added += 1

        if pinned:
            graph.reassign_start(exclude=p)
            graph.membership[p] = int(NodeState.TOMBSTONED)
            graph.tombstones.add(int(p))
            graph._n_active -= 1
            graph._n_tombstoned += 1
        else:
            graph.membership[p] = int(NodeState.ABSENT)
            graph.degrees[p] = 0
            graph._n_active -= 1
            graph.removed_ids.add(int(p))

        r_bound = graph.params.degree_bound
        for node in sorted(staged):
            lst = staged[node]
            arr = np.asarray(lst, dtype=np.int64)
            if len(lst) > r_bound:
                out, evals = _kernels.robust_prune(
                    vectors, node, arr, r_bound, graph.alpha_eff, metric)
                graph.counter.add(int(evals))
                _kernels.store_row(graph.adjacency, graph.degrees, node, out, out.shape[0])
            else:
                _kernels.store_row(graph.adjacency, graph.degrees, node, arr, arr.shape[0])

        graph.deletions_since_consolidation += 1
        graph.op_counts.inplace_deletes += 1
        return DeleteStats(edges_added, int(n_in.size), len(out_nbrs), int(cand.size))


def consolidate_light(graph: Graph, removed: set[int] | None = None) -> None:
    """Strip dangling ids from every adjacency list; zero distance work.

    ``removed`` defaults to the graph's own record of ids deleted in place
    since the last light consolidation.  Pending tombstones (an ex-start
    kept navigable by the pinned-start policy) are finalized here as well:
    still pure list surgery, no distance evaluations.
    """
    with graph.update_lock:
        to_strip = set(graph.removed_ids) if removed is None else set(removed)
        pending = set(graph.tombstones)
        for t in pending:
            graph.membership[t] = int(NodeState.ABSENT)
            graph.degrees[t] = 0
        graph._n_tombstoned -= len(pending)
        graph.tombstones.clear()
        to_strip |= pending
        if to_strip:
            flags = np.zeros(graph.dataset.count, np.uint8)
            flags[list(to_strip)] = 1
            _kernels.strip_removed(graph.adjacency, graph.degrees, graph.membership, flags)
        graph.removed_ids -= to_strip
        graph.deletions_since_consolidation = 0
        graph.op_counts.light_consolidations += 1


def maybe_consolidate(graph: Graph, policy: ConsolidationPolicy,
                      params: BuildParams | None = None) -> bool:
    """Consolidate when deletions since the last one reach the threshold.

    Fires when ``deletions >= threshold * (active + tombstoned count)`` and
    at least one deletion happened; dispatches on the policy mode.
    """
    with graph.update_lock:
        pending = graph.deletions_since_consolidation
        if pending < 1 or pending < policy.threshold * graph.node_count:
            return False
        if policy.mode == ConsolidationMode.BASELINE:
            consolidate_baseline(graph, params)
        else:
            consolidate_light(graph)
        return True
