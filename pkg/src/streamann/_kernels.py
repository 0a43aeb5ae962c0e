"""Compiled inner loops for graph search, pruning, and consolidation.

Every distance here accumulates in float64 over float32 inputs with a fixed
left-to-right term order, so results are bit-reproducible for a given build
and agree with the pure-python reference paths used in tests.

Each kernel returns the number of distance evaluations it performed; callers
feed that into the shared DistanceCounter.  Kernels run under the GIL (no
``nogil``), which makes every kernel call atomic with respect to the
adjacency mutations done through ``store_row`` / ``append_neighbor``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

METRIC_L2 = 0  # squared euclidean
METRIC_IP = 1  # negated inner product

MEMBER_ABSENT = 0
MEMBER_ACTIVE = 1
MEMBER_TOMBSTONE = 2


@njit(cache=True, inline="always")
def _dist_to_row(vectors, i, q, metric):
    s = 0.0
    if metric == METRIC_L2:
        for m in range(q.shape[0]):
            d = np.float64(vectors[i, m]) - np.float64(q[m])
            s += d * d
    else:
        for m in range(q.shape[0]):
            s -= np.float64(vectors[i, m]) * np.float64(q[m])
    return s


@njit(cache=True)
def dist_pair(a, b, metric):
    """Distance between two 1-D float32 vectors (one evaluation)."""
    s = 0.0
    if metric == METRIC_L2:
        for m in range(a.shape[0]):
            d = np.float64(a[m]) - np.float64(b[m])
            s += d * d
    else:
        for m in range(a.shape[0]):
            s -= np.float64(a[m]) * np.float64(b[m])
    return s


@njit(cache=True)
def greedy_search(vectors, adjacency, degrees, membership, start, q, l, metric):
    """Beam search from ``start`` toward query ``q`` with beam width ``l``.

    Expands the closest unexpanded beam entry, adds its out-neighbors
    (skipping absent ids and ids already scored), truncates the beam to the
    ``l`` closest, and stops when every beam entry is expanded.  Tombstoned
    nodes are navigated like active ones.  Ties always break toward the
    smaller id.

    Returns expansion-ordered arrays (ids, distances, tombstone flags) plus
    the distance-evaluation count.
    """
    n = vectors.shape[0]
    seen = np.zeros(n, np.uint8)

    beam_ids = np.empty(l, np.int64)
    beam_dists = np.empty(l, np.float64)
    beam_exp = np.zeros(l, np.uint8)
    beam_len = 0

    cap = 4 * l + 16
    vis_ids = np.empty(cap, np.int64)
    vis_dists = np.empty(cap, np.float64)
    vis_tomb = np.empty(cap, np.uint8)
    vis_len = 0

    evals = 0
    d0 = _dist_to_row(vectors, start, q, metric)
    evals += 1
    beam_ids[0] = start
    beam_dists[0] = d0
    beam_len = 1
    seen[start] = 1

    while True:
        pick = -1
        for i in range(beam_len):
            if beam_exp[i] == 0:
                pick = i
                break
        if pick < 0:
            break
        v = beam_ids[pick]
        beam_exp[pick] = 1

        if vis_len == cap:
            cap = cap * 2
            new_ids = np.empty(cap, np.int64)
            new_dists = np.empty(cap, np.float64)
            new_tomb = np.empty(cap, np.uint8)
            for i in range(vis_len):
                new_ids[i] = vis_ids[i]
                new_dists[i] = vis_dists[i]
                new_tomb[i] = vis_tomb[i]
            vis_ids = new_ids
            vis_dists = new_dists
            vis_tomb = new_tomb
        vis_ids[vis_len] = v
        vis_dists[vis_len] = beam_dists[pick]
        vis_tomb[vis_len] = 1 if membership[v] == MEMBER_TOMBSTONE else 0
        vis_len += 1

        deg = degrees[v]
        for e in range(deg):
            nb = np.int64(adjacency[v, e])
            if membership[nb] == MEMBER_ABSENT:
                continue
            if seen[nb] == 1:
                continue
            seen[nb] = 1
            d = _dist_to_row(vectors, nb, q, metric)
            evals += 1
            if beam_len == l:
                wd = beam_dists[beam_len - 1]
                if d > wd or (d == wd and nb > beam_ids[beam_len - 1]):
                    continue
                beam_len -= 1
            pos = beam_len
            while pos > 0 and (
                beam_dists[pos - 1] > d
                or (beam_dists[pos - 1] == d and beam_ids[pos - 1] > nb)
            ):
                beam_ids[pos] = beam_ids[pos - 1]
                beam_dists[pos] = beam_dists[pos - 1]
                beam_exp[pos] = beam_exp[pos - 1]
                pos -= 1
            beam_ids[pos] = nb
            beam_dists[pos] = d
            beam_exp[pos] = 0
            beam_len += 1

    return vis_ids[:vis_len], vis_dists[:vis_len], vis_tomb[:vis_len], evals


@njit(cache=True)
def _prune_core(vectors, p, cand_ids, r_bound, alpha_eff, metric, out):
    """Greedy diversified selection into ``out``; returns (out_len, evals).

    Candidates are deduplicated and ``p`` itself is dropped before
    selection.  Repeatedly keeps the closest remaining candidate v (ties to
    the smaller id) and discards every remaining u that v dominates, i.e.
    where ``alpha_eff * d(u, v) <= d(u, p)``.
    """
    m0 = cand_ids.shape[0]
    srt = np.sort(cand_ids)
    ids = np.empty(m0, np.int64)
    m = 0
    prev = np.int64(-1)
    for i in range(m0):
        c = srt[i]
        if c == p or c == prev:
            continue
        ids[m] = c
        m += 1
        prev = c

    dists = np.empty(m, np.float64)
    pv = vectors[p]
    for i in range(m):
        dists[i] = _dist_to_row(vectors, ids[i], pv, metric)
    evals = m

    alive = np.ones(m, np.uint8)
    remaining = m
    out_len = 0
    while remaining > 0 and out_len < r_bound:
        best = -1
        bd = np.inf
        for i in range(m):
            if alive[i] == 1 and dists[i] < bd:
                best = i
                bd = dists[i]
        v = ids[best]
        out[out_len] = v
        out_len += 1
        alive[best] = 0
        remaining -= 1
        if out_len == r_bound or remaining == 0:
            break
        vv = vectors[v]
        for i in range(m):
            if alive[i] == 1:
                duv = _dist_to_row(vectors, ids[i], vv, metric)
                evals += 1
                if not (alpha_eff * duv > dists[i]):
                    alive[i] = 0
                    remaining -= 1
    return out_len, evals


@njit(cache=True)
def robust_prune(vectors, p, cand_ids, r_bound, alpha_eff, metric):
    """Standalone pruning entry point; returns (kept ids, evals)."""
    out = np.empty(r_bound, np.int64)
    out_len, evals = _prune_core(vectors, p, cand_ids, r_bound, alpha_eff, metric, out)
    return out[:out_len].copy(), evals


@njit(cache=True)
def store_row(adjacency, degrees, node, ids, m):
    """Replace a node's adjacency row; atomic w.r.t. other kernels."""
    for i in range(m):
        adjacency[node, i] = ids[i]
    degrees[node] = m


@njit(cache=True)
def add_backedges(vectors, adjacency, degrees, membership, p, nbrs, r_bound, alpha_eff, metric):
    """Add ``p`` to each neighbor's row, pruning any row that overflows."""
    evals = 0
    merged = np.empty(r_bound + 1, np.int64)
    out = np.empty(r_bound, np.int64)
    for j in range(nbrs.shape[0]):
        v = nbrs[j]
        deg = degrees[v]
        # dangling entries are dead weight: they must not occupy slots or
        # compete in the prune, so the row is compacted to live ids first
        m = 0
        present = False
        for e in range(deg):
            x = adjacency[v, e]
            if membership[x] == MEMBER_ABSENT:
                continue
            if x == p:
                present = True
            merged[m] = x
            m += 1
        if present:
            continue
        if m < r_bound:
            merged[m] = p
            store_row(adjacency, degrees, v, merged, m + 1)
        else:
            merged[m] = p
            out_len, ev = _prune_core(
                vectors, v, merged[: m + 1], r_bound, alpha_eff, metric, out
            )
            evals += ev
            store_row(adjacency, degrees, v, out, out_len)
    return evals


@njit(cache=True)
def in_neighbors_among(adjacency, degrees, candidates, p):
    """Mask of which ``candidates`` hold an out-edge to ``p``."""
    m = candidates.shape[0]
    mask = np.zeros(m, np.uint8)
    for i in range(m):
        z = candidates[i]
        for e in range(degrees[z]):
            if adjacency[z, e] == p:
                mask[i] = 1
                break
    return mask


@njit(cache=True)
def closest_subset(vectors, target, cand_ids, c, exclude, metric):
    """The ``c`` candidates closest to ``target``'s vector, by (dist, id).

    ``exclude`` is skipped entirely (no distance evaluation for it).
    Returns (ids, evals).
    """
    m = cand_ids.shape[0]
    tv = vectors[target]
    ds = np.empty(m, np.float64)
    ok = np.zeros(m, np.uint8)
    evals = 0
    for i in range(m):
        if cand_ids[i] == exclude:
            continue
        ds[i] = _dist_to_row(vectors, cand_ids[i], tv, metric)
        ok[i] = 1
        evals += 1
    out = np.empty(c, np.int64)
    out_len = 0
    while out_len < c:
        best = -1
        bd = np.inf
        bid = np.int64(-1)
        for i in range(m):
            if ok[i] == 1:
                if ds[i] < bd or (ds[i] == bd and cand_ids[i] < bid):
                    best = i
                    bd = ds[i]
                    bid = cand_ids[i]
        if best < 0:
            break
        out[out_len] = cand_ids[best]
        out_len += 1
        ok[best] = 0
    return out[:out_len].copy(), evals


@njit(cache=True)
def consolidate_sweep(vectors, adjacency, degrees, membership, r_bound, alpha_eff, metric):
    """Full splice-and-prune pass over every active node.

    For each active node: splice in the live out-neighbors of each
    tombstoned out-neighbor, drop tombstoned entries, then re-prune the
    merged candidate list down to the degree bound.  Returns the distance
    evaluation count.
    """
    n = degrees.shape[0]
    evals = 0
    merged = np.empty(r_bound * (r_bound + 1), np.int64)
    out = np.empty(r_bound, np.int64)
    for p in range(n):
        if membership[p] != MEMBER_ACTIVE:
            continue
        mlen = 0
        for e in range(degrees[p]):
            v = np.int64(adjacency[p, e])
            if membership[v] == MEMBER_TOMBSTONE:
                for e2 in range(degrees[v]):
                    u = np.int64(adjacency[v, e2])
                    if membership[u] != MEMBER_TOMBSTONE:
                        merged[mlen] = u
                        mlen += 1
            else:
                merged[mlen] = v
                mlen += 1
        out_len, ev = _prune_core(
            vectors, p, merged[:mlen], r_bound, alpha_eff, metric, out
        )
        evals += ev
        store_row(adjacency, degrees, p, out, out_len)
    return evals


@njit(cache=True)
def strip_removed(adjacency, degrees, membership, removed_mask):
    """Drop every adjacency entry whose id is flagged in ``removed_mask``.

    Pure list surgery over live nodes; performs no distance evaluations.
    """
    n = degrees.shape[0]
    for p in range(n):
        if membership[p] == MEMBER_ABSENT:
            continue
        deg = degrees[p]
        w = 0
        for e in range(deg):
            nb = adjacency[p, e]
            if removed_mask[nb] == 0:
                adjacency[p, w] = nb
                w += 1
        if w != deg:
            degrees[p] = w


@njit(cache=True)
def audit_no_refs(adjacency, degrees, membership, flags):
    """Count adjacency entries of live nodes whose target id is flagged."""
    n = degrees.shape[0]
    bad = 0
    for p in range(n):
        if membership[p] == MEMBER_ABSENT:
            continue
        for e in range(degrees[p]):
            if flags[adjacency[p, e]] == 1:
                bad += 1
    return bad
