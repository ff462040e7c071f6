import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from creditpipe.errors import ConfigError, StatisticsError
from creditpipe.featsel import (
    ClusterCut,
    cluster_features,
    correlation_matrix,
    own_cluster_r2,
    pick_representatives,
    vif,
    vif_prune,
)
from creditpipe.frame import Frame
from creditpipe.preprocess import apply_preprocessor, fit_preprocessor
from oracles import corr_two_pass, vif_lstsq


def _frame(X, prefix="c"):
    return Frame.from_matrix(X, [f"{prefix}{i}" for i in range(X.shape[1])])


def test_identical_columns_correlate_one():
    a = np.random.default_rng(0).normal(size=50)
    C = correlation_matrix(_frame(np.column_stack([a, a])))
    assert C[0, 1] == pytest.approx(1.0, abs=1e-15)


def test_negated_column_correlates_minus_one():
    a = np.random.default_rng(1).normal(size=50)
    C = correlation_matrix(_frame(np.column_stack([a, -a])))
    assert C[0, 1] == pytest.approx(-1.0, abs=1e-15)


def test_correlation_matches_two_pass_oracle():
    X = np.random.default_rng(2).normal(size=(1000, 3)) @ np.array([[1, 0.3, 0], [0, 1, 0.5], [0, 0, 1]])
    C = correlation_matrix(_frame(X))
    for i in range(3):
        for j in range(3):
            if i != j:
                assert abs(C[i, j] - corr_two_pass(X[:, i], X[:, j])) <= 1e-12


def test_correlation_needs_two_rows():
    with pytest.raises(StatisticsError):
        correlation_matrix(_frame(np.ones((1, 2))))


def test_uncorrelated_features_stay_separate():
    cl = cluster_features(np.eye(5), ClusterCut(height=0.5))
    assert cl.n_clusters == 5


def test_cut_count_above_feature_count_rejected():
    with pytest.raises(ConfigError):
        cluster_features(np.eye(3), ClusterCut(height=None, count=4))


def test_cut_requires_exactly_one_rule():
    with pytest.raises(ConfigError):
        ClusterCut(height=0.5, count=2)


def test_merge_heights_follow_average_linkage():
    corr = np.array([[1.0, 0.9, 0.1], [0.9, 1.0, 0.2], [0.1, 0.2, 1.0]])
    cl = cluster_features(corr)
    (a, b, h1, s1), (c, d, h2, s2) = cl.merges
    assert {a, b} == {0, 1} and h1 == pytest.approx(1 - 0.81) and s1 == 2
    # average of 1 - r^2 from {0, 1} to 2
    assert h2 == pytest.approx(((1 - 0.01) + (1 - 0.04)) / 2) and s2 == 3
    assert cl.n_clusters == 2


def test_planted_blocks_co_assigned(synth_default):
    frame, truth, _ = synth_default
    clean = apply_preprocessor(fit_preprocessor(frame), frame)
    names = clean.feature_names
    cl = cluster_features(correlation_matrix(clean), ClusterCut(height=0.7), names)
    by_block: dict[int, set[int]] = {}
    for name, b in truth.block_assignments.items():
        by_block.setdefault(b, set()).add(cl.assignments[name])
    for b, ids in by_block.items():
        assert len(ids) == 1, f"block {b} split across clusters {ids}"
    assert len({next(iter(v)) for v in by_block.values()}) == len(by_block)


def test_planted_blocks_with_count_cut(synth_default):
    frame, truth, _ = synth_default
    clean = apply_preprocessor(fit_preprocessor(frame), frame)
    names = clean.feature_names
    # four blocks plus every other column as its own singleton
    n_single = len(names) - len(truth.block_assignments)
    cl = cluster_features(correlation_matrix(clean), ClusterCut(height=None, count=4 + n_single), names)
    for b in set(truth.block_assignments.values()):
        members = [n for n, bb in truth.block_assignments.items() if bb == b]
        assert len({cl.assignments[m] for m in members}) == 1


def test_singleton_representative():
    X = np.random.default_rng(3).normal(size=(40, 2))
    f = _frame(X)
    cl = cluster_features(correlation_matrix(f), ClusterCut(height=0.01), f.feature_names)
    assert pick_representatives(f, cl) == ["c0", "c1"]


def test_midpoint_member_is_representative():
    rng = np.random.default_rng(4)
    a, c = rng.normal(size=500), rng.normal(size=500)
    b = (a + c) / 2 + 1e-3 * rng.normal(size=500)
    f = _frame(np.column_stack([a, b, c]))
    cl = cluster_features(correlation_matrix(f), ClusterCut(height=None, count=1), f.feature_names)
    # oracle: mean squared correlation of each member with the other two
    r = np.corrcoef(np.column_stack([a, b, c]).T) ** 2
    own = [(r[i].sum() - 1) / 2 for i in range(3)]
    assert int(np.argmax(own)) == 1
    assert pick_representatives(f, cl) == ["c1"]


def test_block_representative_is_least_noise_member(synth_default):
    frame, truth, _ = synth_default
    clean = apply_preprocessor(fit_preprocessor(frame), frame)
    names = clean.feature_names
    cl = cluster_features(correlation_matrix(clean), ClusterCut(height=0.7), names)
    reps = set(pick_representatives(clean, cl))
    C = correlation_matrix(clean)
    for b, expected in truth.least_noise_members.items():
        members = [n for n, bb in truth.block_assignments.items() if bb == b]
        idx = [names.index(m) for m in members]
        own = [np.mean([C[i, j] ** 2 for j in idx if j != i]) for i in idx]
        assert members[int(np.argmax(own))] == expected
        assert expected in reps


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2**31))
def test_representatives_one_per_cluster(p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, p)) @ rng.normal(size=(p, p))
    f = _frame(X)
    cl = cluster_features(correlation_matrix(f), ClusterCut(height=0.7), f.feature_names)
    reps = pick_representatives(f, cl)
    assert len(reps) == cl.n_clusters
    assert sorted(cl.assignments[r] for r in reps) == sorted(set(cl.assignments.values()))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), st.integers(0, 2**31))
def test_clustering_is_permutation_equivariant(p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, p)) @ rng.normal(size=(p, p))
    names = [f"c{i}" for i in range(p)]
    perm = rng.permutation(p)
    C = correlation_matrix(_frame(X))
    a = cluster_features(C, ClusterCut(height=0.7), names)
    b = cluster_features(C[np.ix_(perm, perm)], ClusterCut(height=0.7), [names[i] for i in perm])
    groups = lambda cl: sorted(sorted(g) for g in cl.members())
    assert groups(a) == groups(b)


def test_own_cluster_r2_singleton_is_one():
    assert own_cluster_r2(np.eye(3), [1]).tolist() == [1.0]


def test_dendrogram_json_has_all_merges(tmp_path):
    from creditpipe.featsel import save_dendrogram

    cl = cluster_features(np.eye(4))
    save_dendrogram(cl, tmp_path / "d.json")
    import json

    doc = json.loads((tmp_path / "d.json").read_text())
    assert len(doc["merges"]) == 3 and doc["labels"] == cl.names


def test_vif_uncorrelated_is_one():
    # exactly orthogonal centred columns
    a = np.array([1.0, -1.0, 1.0, -1.0])
    b = np.array([1.0, 1.0, -1.0, -1.0])
    f = _frame(np.column_stack([a, b]))
    assert vif(f, "c0") == pytest.approx(1.0, abs=1e-9)


def test_vif_exact_collinearity_is_infinite():
    rng = np.random.default_rng(5)
    a, b = rng.random(30), rng.random(30)
    f = Frame.from_matrix(np.column_stack([a, b, a + b]), ["a", "b", "c"])
    assert vif(f, "c") == float("inf")


def test_vif_matches_lstsq_oracle_with_planted_dependency():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(80, 4))
    X[:, 3] = 0.7 * X[:, 0] - 0.2 * X[:, 1] + 0.1 * rng.normal(size=80)
    f = _frame(X)
    for j in range(4):
        assert vif(f, f"c{j}") == pytest.approx(vif_lstsq(X, j), rel=1e-8)


def test_vif_needs_two_columns():
    with pytest.raises(StatisticsError):
        vif(_frame(np.ones((5, 1))), "c0")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_vif_agrees_with_oracle_on_random_frames(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 10)) @ (np.eye(10) + 0.3 * rng.normal(size=(10, 10)))
    f = _frame(X)
    for j in range(10):
        assert abs(vif(f, f"c{j}") - vif_lstsq(X, j)) <= 1e-8 * max(1.0, vif_lstsq(X, j))


def test_prune_keeps_everything_when_under_threshold():
    X = np.random.default_rng(7).normal(size=(200, 4))
    tr = vif_prune(_frame(X))
    assert tr.removals == [] and set(tr.kept) == {"c0", "c1", "c2", "c3"}


def test_prune_removes_collinear_member_first():
    rng = np.random.default_rng(8)
    a, b = rng.random(60), rng.random(60)
    X = np.column_stack([a, b, a + b])
    f = Frame.from_matrix(X, ["a", "b", "c"])
    tr = vif_prune(f, 5.0)
    assert len(tr.removals) == 1
    assert tr.removals[0][1] == float("inf")
    # all three are infinite; the smallest column index goes first
    assert tr.removals[0][0] == "a"
    kept = list(tr.kept)
    Xk = np.column_stack([f.column(n) for n in kept])
    for j in range(len(kept)):
        assert vif_lstsq(Xk, j) <= 5.0


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 8), st.integers(0, 2**31))
def test_prune_terminates_and_respects_threshold(p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, p)) @ (np.eye(p) + rng.normal(size=(p, p)))
    f = _frame(X)
    tr = vif_prune(f, 5.0)
    assert len(tr.removals) <= p - 1
    kept = list(tr.kept)
    if len(kept) > 1:
        assert all(vif(f, n, kept) <= 5.0 for n in kept)
        assert all(v <= 5.0 for v in tr.kept.values())


def test_vif_trace_csv(tmp_path):
    rng = np.random.default_rng(9)
    a, b = rng.random(30), rng.random(30)
    tr = vif_prune(Frame.from_matrix(np.column_stack([a, b, a + b]), ["a", "b", "c"]))
    tr.to_csv(tmp_path / "v.csv")
    rows = list(csv.reader(open(tmp_path / "v.csv")))
    assert rows[0] == ["step", "column", "vif"] and rows[1][:2] == ["1", "a"]
