import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from creditpipe.errors import ConfigError, ResampleError
from creditpipe.resample import AdasynConfig, adasyn, adasyn_multiclass, knn
from oracles import knn_scan, on_some_segment


def test_knn_on_a_line():
    pts = np.array([[0.0], [1.0], [3.0]])
    assert knn(pts, 0, 1).tolist() == [1]


def test_knn_duplicates_break_ties_by_index():
    pts = np.array([[0.5, 0.5], [0.5, 0.5], [0.5, 0.5], [0.9, 0.9]])
    assert knn(pts, 1, 2).tolist() == [0, 2]


def test_knn_restricted_pool():
    pts = np.array([[0.0], [0.1], [0.2], [5.0]])
    assert knn(pts, 0, 1, restrict=np.array([2, 3])).tolist() == [2]


def test_knn_k_too_large():
    with pytest.raises(ResampleError):
        knn(np.zeros((3, 1)), 0, 3)


def test_knn_matches_exhaustive_scan():
    pts = np.random.default_rng(0).random((200, 2))
    for q in range(200):
        assert knn(pts, q, 5).tolist() == knn_scan(pts, q, 5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_knn_with_ties_matches_scan(seed, k):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 3, size=(25, 2)).astype(float)  # many exact ties
    q = int(rng.integers(0, 25))
    pool = rng.choice(25, size=15, replace=False)
    assert knn(pts, q, k, restrict=pool).tolist() == knn_scan(pts, q, k, pool)


def test_balanced_input_unchanged():
    rng = np.random.default_rng(1)
    X = rng.random((20, 3))
    y = np.repeat([0, 1], 10)
    Xa, ya, rep = adasyn(X, y)
    assert np.array_equal(Xa, X) and np.array_equal(ya, y)
    assert rep.generated == 0


def test_eight_two_case_generates_six_on_segments():
    rng = np.random.default_rng(2)
    X = rng.random((10, 3))
    y = np.array([0] * 8 + [1] * 2)
    Xa, ya, rep = adasyn(X, y, AdasynConfig(seed=3))
    assert len(Xa) == 16 and (ya[10:] == 1).all()
    minority = X[y == 1]
    for p in Xa[10:]:
        assert on_some_segment(p, minority, 1e-9)
        lo, hi = minority.min(axis=0), minority.max(axis=0)
        assert (p >= lo - 1e-12).all() and (p <= hi + 1e-12).all()


def test_one_minority_row_is_an_error():
    with pytest.raises(ResampleError):
        adasyn(np.random.default_rng(0).random((5, 2)), np.array([0, 0, 0, 0, 1]))


def test_single_class_is_an_error():
    with pytest.raises(ResampleError):
        adasyn(np.zeros((4, 2)), np.zeros(4, dtype=int))


def test_bad_config_rejected():
    with pytest.raises(ConfigError):
        AdasynConfig(k_neighbors=0)
    with pytest.raises(ConfigError):
        AdasynConfig(beta=1.5)


def test_embedded_minority_gets_more_synthetic_rows():
    # minority point 0 sits inside the majority cloud, point 1 is isolated with other minority rows
    rng = np.random.default_rng(4)
    maj = 0.5 + 0.02 * rng.standard_normal((30, 2))
    isolated = np.array([[0.05, 0.05], [0.06, 0.05], [0.05, 0.06], [0.06, 0.06], [0.055, 0.07]])
    embedded = np.array([[0.5, 0.5]])
    X = np.vstack([maj, embedded, isolated])
    y = np.array([0] * 30 + [1] * 6)
    _, _, rep = adasyn(X, y, AdasynConfig(seed=0))
    p = rep.passes[0]
    # oracle: r_i from an exhaustive scan over all rows
    r = []
    for row in np.flatnonzero(y == 1):
        nb = knn_scan(X, row, 5)
        r.append(np.mean(y[nb] != 1))
    assert np.allclose(p.ratios, r)
    order = np.argsort(-np.asarray(r), kind="stable")
    g = p.counts[order]
    assert all(g[i] >= g[i + 1] for i in range(len(g) - 1))
    assert p.counts[0] > p.counts[1:].max()


def test_uniform_fallback_when_no_majority_neighbours():
    X = np.array([[0.0, 0.0], [0.01, 0.0], [0.0, 0.01], [0.01, 0.01],
                  [1.0, 1.0], [0.99, 1.0], [1.0, 0.99], [0.99, 0.99], [0.98, 0.98], [0.97, 0.97]])
    y = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0, 0])
    _, _, rep = adasyn(X, y, AdasynConfig(k_neighbors=3))
    p = rep.passes[0]
    assert (p.ratios == 0).all() and p.counts.sum() == 2


def _imbalanced(seed):
    rng = np.random.default_rng(seed)
    n_min = int(rng.integers(2, 15))
    n_maj = int(rng.integers(n_min, 60))
    p = int(rng.integers(1, 5))
    X = rng.random((n_min + n_maj, p))
    y = np.array([1] * n_min + [0] * n_maj)
    perm = rng.permutation(len(y))
    return X[perm], y[perm], n_min, n_maj


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_balance_slack_and_unit_range(seed):
    X, y, n_min, n_maj = _imbalanced(seed)
    Xa, ya, _ = adasyn(X, y, AdasynConfig(seed=seed))
    assert abs(int(np.sum(ya == 1)) - n_maj) <= n_min
    assert Xa.min() >= 0.0 and Xa.max() <= 1.0
    assert np.array_equal(Xa[: len(X)], X)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_synthetic_points_on_minority_segments(seed):
    X, y, _, _ = _imbalanced(seed)
    Xa, _, _ = adasyn(X, y, AdasynConfig(seed=seed))
    minority = X[y == 1]
    for p in Xa[len(X):]:
        assert on_some_segment(p, minority, 1e-9)


def test_fixed_seed_is_byte_identical():
    X, y, _, _ = _imbalanced(17)
    a = adasyn(X, y, AdasynConfig(seed=5))[0]
    b = adasyn(X, y, AdasynConfig(seed=5))[0]
    assert a.tobytes() == b.tobytes()


def test_multiclass_passes_in_class_order():
    rng = np.random.default_rng(6)
    X = rng.random((60, 3))
    y = np.array([0] * 10 + [1] * 5 + [2] * 45)
    Xa, ya, rep = adasyn_multiclass(X, y, AdasynConfig(seed=1))
    assert [p.minority_class for p in rep.passes] == [0, 1]
    counts = np.bincount(ya)
    assert abs(counts[0] - 45) <= 10 and abs(counts[1] - 45) <= 5
    for cls in (0, 1):
        new = Xa[60:][ya[60:] == cls]
        for p in new:
            assert on_some_segment(p, X[y == cls], 1e-9)


def test_report_json_shape():
    X, y, _, _ = _imbalanced(3)
    _, _, rep = adasyn(X, y)
    doc = rep.to_json()
    assert doc["generated"] == rep.generated
    assert set(doc["passes"][0]) >= {"r", "r_hat", "g", "minority_class"}
