import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gadforge.graph import NodeLabels, build_graph
from gadforge.ratio import RetentionStrategy, adjust_ratio, retained_count, select_retained


def brute_neighbor_mean(g, labels, node):
    """Scan the adjacency row; average originally-normal neighbours, else the global normal mean."""
    X = g.features.astype(np.float64)
    nbrs = [j for j in g.neighbors(node) if labels[j] == 0]
    if nbrs:
        return sum(X[j] for j in nbrs) / len(nbrs)
    return X[labels == 0].mean(axis=0)


def _blobs():
    # clusters of 30, 15 and 5 points far apart; ids interleaved so order matters
    rng = np.random.default_rng(0)
    centres = {0: (0, 0), 1: (50, 50), 2: (-50, 80)}
    member = np.array([0] * 30 + [1] * 15 + [2] * 5)
    member = member[rng.permutation(50)]
    X = np.array([centres[c] for c in member]) + rng.normal(0, 0.5, (50, 2))
    return X, member


def test_core_takes_largest_cluster():
    X, member = _blobs()
    pos, sizes = select_retained(X, RetentionStrategy("core", 3), 10)
    assert sorted(sizes) == [5, 15, 30]
    assert pos.tolist() == np.flatnonzero(member == 0)[:10].tolist()


def test_edge_spills_into_next_smallest():
    X, member = _blobs()
    pos, _ = select_retained(X, RetentionStrategy("edge", 3), 8)
    expected = np.sort(np.r_[np.flatnonzero(member == 2), np.flatnonzero(member == 1)[:3]])
    assert pos.tolist() == expected.tolist()


def test_select_bounds():
    X, _ = _blobs()
    for bad in (0, 51):
        with pytest.raises(ValueError):
            select_retained(X, "core", bad)
    with pytest.raises(ValueError):
        RetentionStrategy("middle")


def test_retained_count_rounding():
    assert retained_count(0.001, 19_717) == 20
    assert retained_count(0.005, 2000) == 10


def test_neighbor_mean_and_fallback():
    feats = np.array([[9, 9], [1, 1], [3, 3], [7, 7], [5, 5]], dtype=np.float32)
    # node 0: anomalous, neighbours 1,2 normal; node 3: anomalous, only neighbour is node 0
    g, _ = build_graph([(0, 1), (0, 2), (0, 3), (1, 4)], 5, feats)
    labels = NodeLabels(np.array([1, 0, 0, 1, 0], np.uint8))
    out, lab, adj = adjust_ratio(g, labels, 0.2, "random", seed=1)
    assert lab.anomaly_count == 1
    for node in adj.demoted:
        expected = [2, 2] if node == 0 else [3, 3]  # fallback: mean of rows 1, 2, 4
        assert out.features[node].tolist() == expected


def test_adjust_errors(seed_graph):
    g, labels = seed_graph
    with pytest.raises(ValueError):
        adjust_ratio(g, labels, 0.2)
    with pytest.raises(ValueError):
        adjust_ratio(g, labels, 0.0)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["core", "edge", "random"]), st.floats(0.001, 0.05), st.integers(0, 100))
def test_adjust_properties(seed_graph, kind, ratio, seed):
    g, labels = seed_graph
    out, lab, adj = adjust_ratio(g, labels, ratio, kind, seed)
    assert lab.anomaly_count == retained_count(ratio, g.n)
    assert abs(lab.ratio - ratio) <= 1 / g.n
    orig = set(labels.anomaly_ids().tolist())
    assert set(adj.retained.tolist()) | set(adj.demoted.tolist()) == orig
    assert not set(adj.retained.tolist()) & set(adj.demoted.tolist())
    assert out.row_offsets is g.row_offsets and out.col_indices is g.col_indices
    untouched = np.setdiff1d(np.arange(g.n), adj.demoted)
    assert out.features[untouched].tobytes() == g.features[untouched].tobytes()
    again = adjust_ratio(g, labels, ratio, kind, seed)[2]
    assert again.retained_checksum() == adj.retained_checksum()


def test_demoted_rows_match_brute_force(seed_graph):
    g, labels = seed_graph
    out, lab, adj = adjust_ratio(g, labels, 0.005, "core", 20)
    for node in adj.demoted:
        assert np.abs(out.features[node] - brute_neighbor_mean(g, labels.labels, node)).max() <= 1e-6
