import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamann.core import Dataset, Metric, generate_synthetic
from streamann.graph import (BuildParams, DuplicateIdError, Graph, NodeState,
                             UnknownIdError, rebuild_from_scratch)
from streamann.oracle import brute_force_knn


def line_dataset(*xs):
    return Dataset(np.array([[x] for x in xs], np.float32))


def small_graph(n=300, dim=8, seed=0, **kw):
    params = BuildParams(degree_bound=kw.pop("degree_bound", 16),
                         l_build=kw.pop("l_build", 32),
                         alpha=kw.pop("alpha", 1.2))
    ds = generate_synthetic(n, dim, 4, seed=seed, **kw)
    g = Graph(ds, params, seed=seed)
    for i in range(n):
        g.insert(i)
    return g


def prune_reference(vectors, p, candidates, r, alpha, metric=Metric.SQUARED_EUCLIDEAN):
    """Straight-line reimplementation of the diversified pruning rule."""
    def d(a, b):
        va = vectors[a].astype(np.float64)
        vb = vectors[b].astype(np.float64)
        if metric == Metric.SQUARED_EUCLIDEAN:
            return float(((va - vb) ** 2).sum())
        return -float(va @ vb)

    a_eff = alpha * alpha if metric == Metric.SQUARED_EUCLIDEAN else alpha
    pool = sorted(set(int(c) for c in candidates) - {p})
    out = []
    while pool and len(out) < r:
        v = min(pool, key=lambda u: (d(p, u), u))
        out.append(v)
        pool = [u for u in pool if u != v and a_eff * d(v, u) > d(p, u)]
    return out


# -- construction basics ----------------------------------------------------


def test_empty_graph_search_is_empty():
    ds = generate_synthetic(10, 4, 2, seed=0)
    g = Graph(ds, BuildParams(degree_bound=4, l_build=8), seed=0)
    res = g.greedy_search(ds.vectors[0], 1, 8)
    assert res.answer_ids.size == 0
    assert res.visited_ids.size == 0


def test_first_insert_becomes_start():
    ds = generate_synthetic(10, 4, 2, seed=0)
    g = Graph(ds, BuildParams(degree_bound=4, l_build=8), seed=0)
    g.insert(7)
    assert g.start == 7
    assert g.state(7) == NodeState.ACTIVE
    assert g.degree(7) == 0
    res = g.greedy_search(ds.vectors[0], 1, 8)
    assert res.answer_ids.tolist() == [7]


def test_duplicate_insert_raises():
    g = small_graph(50)
    with pytest.raises(DuplicateIdError):
        g.insert(10)


def test_out_of_range_id_raises():
    g = small_graph(50)
    with pytest.raises(UnknownIdError):
        g.insert(50)
    with pytest.raises(UnknownIdError):
        g.insert(-1)


def test_degree_bound_always_holds():
    g = small_graph(400, degree_bound=8, l_build=24)
    assert int(g.degrees.max()) <= 8
    # every edge points at a live node right after a pure insert workload
    for i in range(400):
        for j in g.neighbors(i):
            assert g.state(int(j)) == NodeState.ACTIVE


def test_inserts_connect_everything():
    g = small_graph(200, degree_bound=16, l_build=48)
    # full-width beam turns greedy search into exhaustive traversal
    res = g.greedy_search(g.dataset.vectors[0], 1, 200)
    assert res.visited_ids.size == 200


def test_backedge_rewrite_sheds_dangling_ids():
    from streamann import _kernels

    g = small_graph(120, degree_bound=8, l_build=24)
    # fabricate a removed node whose reference was never patched away
    dead = 60
    g.membership[dead] = int(NodeState.ABSENT)
    g.degrees[dead] = 0
    g.removed_ids.add(dead)
    g._n_active -= 1
    z = next(int(v) for v in g.active_ids()
             if dead not in g.adjacency[v, : g.degrees[v]])
    row = [int(x) for x in g.adjacency[z, : g.degrees[z]]][:7]
    row.append(dead)
    g.adjacency[z, : len(row)] = row
    g.degrees[z] = len(row)

    fresh = next(int(c) for c in g.active_ids() if c != z and c not in row)
    _kernels.add_backedges(g.dataset.vectors, g.adjacency, g.degrees,
                           g.membership, fresh, np.array([z], np.int64),
                           g.params.degree_bound, g.alpha_eff, int(g.metric))
    after = [int(x) for x in g.adjacency[z, : g.degrees[z]]]
    assert dead not in after
    assert fresh in after
    # the dead entry freed a slot, so no live neighbor was pruned away
    assert set(after) >= set(row) - {dead}


# -- greedy search ----------------------------------------------------------


def test_search_matches_oracle_with_full_beam():
    g = small_graph(250, degree_bound=16, l_build=48)
    queries = generate_synthetic(10, 8, 4, seed=99, center_seed=0)
    gt = brute_force_knn(g.dataset, np.arange(250), queries.vectors, 10)
    for qi in range(10):
        res = g.greedy_search(queries.vectors[qi], 10, 250)
        assert res.answer_ids.tolist() == gt.ids[qi].tolist()
        assert np.allclose(res.answer_dists, gt.dists[qi], rtol=1e-6)


def test_answers_sorted_and_subset_of_visited():
    g = small_graph(300)
    res = g.greedy_search(g.dataset.vectors[42], 10, 32)
    d = res.answer_dists
    assert (d[:-1] <= d[1:]).all()
    assert set(res.answer_ids.tolist()) <= set(res.visited_ids.tolist())
    assert res.visited_ids[0] == g.start


def test_search_ties_break_toward_smaller_id():
    # four copies of the same point: ranking must be by id
    ds = Dataset(np.zeros((4, 3), np.float32))
    g = Graph(ds, BuildParams(degree_bound=4, l_build=8), seed=0)
    for i in range(4):
        g.insert(i)
    res = g.greedy_search(np.zeros(3, np.float32), 4, 8)
    assert res.answer_ids.tolist() == [0, 1, 2, 3]


def test_search_validates_arguments():
    g = small_graph(50)
    with pytest.raises(ValueError):
        g.greedy_search(g.dataset.vectors[0], 0, 8)
    with pytest.raises(ValueError):
        g.greedy_search(g.dataset.vectors[0], 9, 8)
    with pytest.raises(ValueError):
        g.greedy_search(np.zeros(3, np.float32), 1, 8)


def test_search_counts_distance_evals():
    g = small_graph(100)
    g.counter.reset()
    g.greedy_search(g.dataset.vectors[0], 1, 16)
    first = g.counter.total
    assert first > 0
    g.greedy_search(g.dataset.vectors[0], 1, 16)
    assert g.counter.total == 2 * first


def test_beam_width_trades_quality():
    g = small_graph(600, degree_bound=12, l_build=24, seed=3)
    queries = generate_synthetic(40, 8, 4, seed=7, center_seed=3)
    gt = brute_force_knn(g.dataset, np.arange(600), queries.vectors, 10)
    def mean_overlap(l):
        hits = 0
        for qi in range(40):
            res = g.greedy_search(queries.vectors[qi], 10, l)
            hits += len(set(res.answer_ids.tolist()) & set(gt.ids[qi].tolist()))
        return hits / (40 * 10)
    assert mean_overlap(64) >= mean_overlap(10) - 1e-9
    assert mean_overlap(64) > 0.9


# -- robust prune -----------------------------------------------------------


def test_prune_line_trace_alpha_covers_far_points():
    # p at 0, candidates at 1, 2 and 4: the closest point dominates the rest
    ds = line_dataset(0.0, 1.0, 2.0, 4.0)
    g = Graph(ds, BuildParams(degree_bound=4, l_build=8, alpha=1.2), seed=0)
    assert g.robust_prune(0, np.array([1, 2, 3])).tolist() == [1]


def test_prune_line_trace_alpha_one_vs_large():
    ds = line_dataset(0.0, 1.0, 1.9)
    g = Graph(ds, BuildParams(degree_bound=4, l_build=8), seed=0)
    assert g.robust_prune(0, np.array([1, 2]), alpha=1.0).tolist() == [1]
    # generous slack keeps the second point reachable
    assert g.robust_prune(0, np.array([1, 2]), alpha=2.2).tolist() == [1, 2]


def test_prune_drops_self_and_duplicates():
    ds = line_dataset(0.0, 1.0, 3.0)
    g = Graph(ds, BuildParams(degree_bound=4, l_build=8), seed=0)
    out = g.robust_prune(0, np.array([0, 1, 1, 0, 1]))
    assert out.tolist() == [1]


def test_prune_respects_degree_bound():
    ds = generate_synthetic(64, 6, 3, seed=2)
    g = Graph(ds, BuildParams(degree_bound=5, l_build=8), seed=0)
    out = g.robust_prune(0, np.arange(1, 64))
    assert 1 <= out.shape[0] <= 5


def test_prune_matches_reference_on_random_inputs():
    ds = generate_synthetic(120, 5, 4, seed=6)
    g = Graph(ds, BuildParams(degree_bound=9, l_build=8, alpha=1.15), seed=0)
    rng = np.random.default_rng(1)
    for trial in range(30):
        p = int(rng.integers(0, 120))
        cand = rng.choice(120, size=int(rng.integers(1, 60)), replace=True)
        got = g.robust_prune(p, cand).tolist()
        want = prune_reference(ds.vectors, p, cand, 9, 1.15)
        assert got == want, f"trial {trial}: {got} != {want}"


def test_prune_matches_reference_inner_product():
    ds = generate_synthetic(80, 5, 4, seed=8, metric=Metric.NEGATIVE_INNER_PRODUCT)
    g = Graph(ds, BuildParams(degree_bound=7, l_build=8, alpha=1.3), seed=0)
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = int(rng.integers(0, 80))
        cand = rng.choice(80, size=40, replace=False)
        got = g.robust_prune(p, cand).tolist()
        want = prune_reference(ds.vectors, p, cand, 7, 1.3,
                               Metric.NEGATIVE_INNER_PRODUCT)
        assert got == want


@given(st.integers(0, 2**31 - 1), st.integers(2, 40))
@settings(max_examples=30, deadline=None)
def test_prune_output_properties(seed, n_cand):
    ds = generate_synthetic(50, 4, 3, seed=11)
    g = Graph(ds, BuildParams(degree_bound=6, l_build=8), seed=0)
    rng = np.random.default_rng(seed)
    cand = rng.choice(50, size=n_cand, replace=True)
    out = g.robust_prune(3, cand)
    ids = out.tolist()
    assert len(ids) == len(set(ids))
    assert 3 not in ids
    assert len(ids) <= 6
    assert set(ids) <= set(int(c) for c in cand)
    if len(set(int(c) for c in cand) - {3}) > 0:
        assert len(ids) >= 1


# -- start reassignment -------------------------------------------------------


def test_reassign_start_picks_active_node():
    g = small_graph(200)
    old = g.start
    new = g.reassign_start(exclude=old)
    assert new != old
    assert g.start == new
    assert g.state(new) == NodeState.ACTIVE


def test_reassign_start_deterministic():
    a = small_graph(150, seed=5)
    b = small_graph(150, seed=5)
    assert a.reassign_start(exclude=a.start) == b.reassign_start(exclude=b.start)


def test_reassign_start_empty_graph_returns_sentinel():
    ds = generate_synthetic(5, 4, 2, seed=0)
    g = Graph(ds, BuildParams(degree_bound=4, l_build=8), seed=0)
    g.insert(0)
    assert g.reassign_start(exclude=0) == -1
    assert g.start == -1


# -- persistence --------------------------------------------------------------


def test_snapshot_round_trip(tmp_path):
    g = small_graph(120, degree_bound=12)
    path = tmp_path / "g.bin"
    g.save(path)
    g2 = Graph.load(path, g.dataset, g.params, seed=g.seed)
    assert g2.start == g.start
    assert np.array_equal(g2.membership, g.membership)
    assert np.array_equal(g2.degrees, g.degrees)
    for i in range(120):
        assert np.array_equal(g2.neighbors(i), g.neighbors(i))
    res_a = g.greedy_search(g.dataset.vectors[1], 5, 16)
    res_b = g2.greedy_search(g.dataset.vectors[1], 5, 16)
    assert res_a.answer_ids.tolist() == res_b.answer_ids.tolist()


def test_snapshot_rejects_corruption(tmp_path):
    from streamann.core import FormatError
    g = small_graph(40, degree_bound=8)
    path = tmp_path / "g.bin"
    g.save(path)
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.bin"

    bad.write_bytes(bytes(raw[:-3]))  # truncated
    with pytest.raises(FormatError):
        Graph.load(bad, g.dataset, g.params)

    wrong = bytearray(raw)
    wrong[16:17] = b"\x07"  # membership byte of slot 0 out of range
    bad.write_bytes(bytes(wrong))
    with pytest.raises(FormatError):
        Graph.load(bad, g.dataset, g.params)

    wrong = bytearray(raw)
    wrong[17:21] = (200).to_bytes(4, "little")  # degree above the bound
    bad.write_bytes(bytes(wrong))
    with pytest.raises(FormatError):
        Graph.load(bad, g.dataset, g.params)


def test_snapshot_wrong_dataset_size_rejected(tmp_path):
    from streamann.core import FormatError
    g = small_graph(40)
    path = tmp_path / "g.bin"
    g.save(path)
    other = generate_synthetic(50, 8, 4, seed=0)
    with pytest.raises(FormatError):
        Graph.load(path, other, g.params)


# -- rebuild ------------------------------------------------------------------


def test_rebuild_from_scratch_deterministic():
    ds = generate_synthetic(150, 8, 4, seed=1)
    params = BuildParams(degree_bound=12, l_build=24)
    active = np.arange(30, 130)
    a = rebuild_from_scratch(ds, active, params, seed=9)
    b = rebuild_from_scratch(ds, active, params, seed=9)
    assert a.start == b.start
    assert np.array_equal(a.adjacency, b.adjacency)
    assert np.array_equal(a.degrees, b.degrees)
    assert a.active_count == 100
    assert sorted(a.active_ids().tolist()) == active.tolist()


def test_rebuild_orders_by_seeded_permutation():
    ds = generate_synthetic(150, 8, 4, seed=1)
    params = BuildParams(degree_bound=12, l_build=24)
    active = np.arange(100)
    a = rebuild_from_scratch(ds, active, params, seed=1)
    b = rebuild_from_scratch(ds, active, params, seed=2)
    # different insertion orders almost surely give different graphs
    assert not np.array_equal(a.adjacency, b.adjacency)
