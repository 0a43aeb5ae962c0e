import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamann.core import (Dataset, DistanceCounter, FormatError, Metric,
                            distance, generate_synthetic, load_ids,
                            load_vectors, save_ids, save_vectors)


def test_distance_squared_euclidean_hand_values():
    # 3-4-5 triangle, squared: 9 + 16
    a = np.array([0.0, 0.0], np.float32)
    b = np.array([3.0, 4.0], np.float32)
    assert distance(a, b, Metric.SQUARED_EUCLIDEAN) == 25.0
    assert distance(a, a, Metric.SQUARED_EUCLIDEAN) == 0.0


def test_distance_negative_inner_product_hand_values():
    a = np.array([1.0, 2.0], np.float32)
    b = np.array([3.0, 4.0], np.float32)
    assert distance(a, b, Metric.NEGATIVE_INNER_PRODUCT) == -11.0
    # higher dot product means closer, i.e. smaller value
    c = np.array([10.0, 10.0], np.float32)
    assert (distance(a, c, Metric.NEGATIVE_INNER_PRODUCT)
            < distance(a, b, Metric.NEGATIVE_INNER_PRODUCT))


def test_distance_matches_float64_reference():
    rng = np.random.default_rng(0)
    a = rng.normal(size=48).astype(np.float32)
    b = rng.normal(size=48).astype(np.float32)
    ref_l2 = float(((a.astype(np.float64) - b.astype(np.float64)) ** 2).sum())
    ref_ip = -float(a.astype(np.float64) @ b.astype(np.float64))
    assert distance(a, b, Metric.SQUARED_EUCLIDEAN) == pytest.approx(ref_l2, rel=1e-12)
    assert distance(a, b, Metric.NEGATIVE_INNER_PRODUCT) == pytest.approx(ref_ip, rel=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=32),
       st.lists(st.floats(-100, 100), min_size=1, max_size=32))
@settings(max_examples=50, deadline=None)
def test_distance_symmetry_and_sign(xs, ys):
    n = min(len(xs), len(ys))
    a = np.array(xs[:n], np.float32)
    b = np.array(ys[:n], np.float32)
    d_ab = distance(a, b, Metric.SQUARED_EUCLIDEAN)
    d_ba = distance(b, a, Metric.SQUARED_EUCLIDEAN)
    assert d_ab == d_ba
    assert d_ab >= 0.0
    assert (distance(a, b, Metric.NEGATIVE_INNER_PRODUCT)
            == distance(b, a, Metric.NEGATIVE_INNER_PRODUCT))


def test_distance_counter_counts_each_call():
    counter = DistanceCounter()
    a = np.zeros(4, np.float32)
    b = np.ones(4, np.float32)
    for _ in range(7):
        distance(a, b, Metric.SQUARED_EUCLIDEAN, counter)
    assert counter.total == 7
    counter.reset()
    assert counter.total == 0


def test_distance_counter_exact_under_threads():
    import threading
    counter = DistanceCounter()
    def bump():
        for _ in range(10_000):
            counter.add(1)
    threads = [threading.Thread(target=bump) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert counter.total == 80_000


def test_dataset_shape_and_dtype():
    ds = generate_synthetic(100, 8, 4, seed=0)
    assert ds.count == 100
    assert ds.dim == 8
    assert ds.vectors.dtype == np.float32
    assert ds.vectors.flags["C_CONTIGUOUS"]
    assert np.array_equal(ds.vector(3), ds.vectors[3])


def test_generate_synthetic_deterministic():
    a = generate_synthetic(200, 12, 5, seed=42)
    b = generate_synthetic(200, 12, 5, seed=42)
    assert np.array_equal(a.vectors, b.vectors)
    c = generate_synthetic(200, 12, 5, seed=43)
    assert not np.array_equal(a.vectors, c.vectors)


def test_generate_synthetic_clusters_are_tight():
    # spread well below inter-center distance puts within-cluster variance
    # far under the total variance
    ds = generate_synthetic(2000, 8, 4, seed=1, spread=0.02)
    total_var = ds.vectors.var(axis=0).sum()
    assert total_var > 10 * (0.02 ** 2 * 8)


def test_generate_synthetic_center_seed_shares_mixture():
    base = generate_synthetic(4000, 8, 4, seed=5, spread=0.01)
    other = generate_synthetic(400, 8, 4, seed=77, center_seed=5, spread=0.01)
    different = generate_synthetic(400, 8, 4, seed=77, spread=0.01)
    # same centers: each query sits close to some base point
    def nearest(ds_from, ds_to):
        d = ((ds_from.vectors[:, None, :].astype(np.float64)
              - ds_to.vectors[None, :50, :].astype(np.float64)) ** 2).sum(2)
        return d.min(axis=1).mean()
    assert nearest(other, base) < nearest(different, base)


def test_vector_file_round_trip(tmp_path):
    ds = generate_synthetic(37, 5, 3, seed=9)
    path = tmp_path / "v.bin"
    save_vectors(ds, path)
    back = load_vectors(path)
    assert back.count == 37 and back.dim == 5
    assert np.array_equal(back.vectors, ds.vectors)


def test_vector_file_layout(tmp_path):
    # little-endian u32 count, u32 dim, then count*dim f32
    ds = Dataset(np.arange(6, dtype=np.float32).reshape(2, 3))
    path = tmp_path / "v.bin"
    save_vectors(ds, path)
    raw = path.read_bytes()
    assert struct.unpack_from("<II", raw, 0) == (2, 3)
    assert len(raw) == 8 + 2 * 3 * 4
    assert np.frombuffer(raw, "<f4", offset=8).tolist() == [0, 1, 2, 3, 4, 5]


def test_ids_file_round_trip(tmp_path):
    ids = np.array([5, 0, 77, 12], np.int64)
    path = tmp_path / "i.bin"
    save_ids(ids, path)
    back = load_ids(path)
    assert back.tolist() == ids.tolist()


def test_load_vectors_rejects_truncation(tmp_path):
    ds = generate_synthetic(10, 4, 2, seed=0)
    path = tmp_path / "v.bin"
    save_vectors(ds, path)
    raw = path.read_bytes()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(raw[:-5])
    with pytest.raises(FormatError):
        load_vectors(bad)
    bad.write_bytes(raw + b"\x00")
    with pytest.raises(FormatError):
        load_vectors(bad)
    bad.write_bytes(raw[:3])
    with pytest.raises(FormatError):
        load_vectors(bad)


@given(st.integers(1, 40), st.integers(1, 9), st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_vector_round_trip_property(count, dim, seed):
    import tempfile
    ds = generate_synthetic(count, dim, min(4, count), seed=seed)
    with tempfile.TemporaryDirectory() as d:
        path = f"{d}/v.bin"
        save_vectors(ds, path)
        assert np.array_equal(load_vectors(path).vectors, ds.vectors)
