import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gadforge.evaluate import (
    Budgets,
    DetectorSpec,
    EvalReport,
    ResourceMonitor,
    aggregate_reports,
    auc_pr,
    auc_roc,
    parse_bytes,
    recall_at_k,
    run_benchmark,
    split_nodes,
)
from gadforge.errors import BudgetExceeded
from gadforge.graph import NodeLabels


def pairwise_auc(s, y):
    pos = [a for a, t in zip(s, y) if t]
    neg = [b for b, t in zip(s, y) if not t]
    won = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return won / (len(pos) * len(neg))


def prefix_scan_ap(s, y):
    """Walk distinct thresholds from high to low; add precision x recall increment."""
    total = sum(y)
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(s), reverse=True):
        sel = [lab for sc, lab in zip(s, y) if sc >= t]
        recall = sum(sel) / total
        ap += (sum(sel) / len(sel)) * (recall - prev_recall)
        prev_recall = recall
    return ap


def test_metric_oracles_random_instances():
    rng = np.random.default_rng(20)
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 6, n) / 5 if rng.random() < 0.5 else rng.random(n)  # half the instances have ties
        assert abs(auc_roc(s, y) - pairwise_auc(s, y)) <= 1e-9
        assert abs(auc_pr(s, y) - prefix_scan_ap(s, y)) <= 1e-9


def test_worked_example():
    y, s = [1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1]
    assert auc_roc(s, y) == 0.75
    assert recall_at_k(s, y, k=2) == 0.5
    assert recall_at_k(s, y) == 0.5


def test_single_positive_last():
    assert auc_pr([0.9, 0.8, 0.7, 0.1], [0, 0, 0, 1]) == pytest.approx(0.25)


def test_metric_errors():
    with pytest.raises(ValueError):
        auc_roc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        auc_pr([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        recall_at_k([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        recall_at_k([0.1, 0.2], [0, 1], k=3)


def test_recall_ties_by_node_id():
    s = [0.5, 0.5, 0.5]
    assert recall_at_k(s, [0, 1, 0], k=1, node_ids=[10, 5, 7]) == 1.0
    assert recall_at_k(s, [0, 1, 0], k=1, node_ids=[1, 5, 7]) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-100, 100), min_size=4, max_size=40), st.integers(0, 10_000))
def test_rank_invariance(scores, seed):
    s = np.array(scores, dtype=float)
    y = np.random.default_rng(seed).integers(0, 2, len(s))
    y[0], y[1] = 0, 1
    t = np.exp(s / 50) * 3 + 1  # strictly increasing map
    assert auc_roc(t, y) == pytest.approx(auc_roc(s, y), abs=1e-12)
    assert auc_pr(t, y) == pytest.approx(auc_pr(s, y), abs=1e-12)
    assert recall_at_k(t, y) == recall_at_k(s, y)


def test_split_stratified_counts():
    labels = np.r_[np.ones(100), np.zeros(900)].astype(np.uint8)
    sp = split_nodes(1000, labels, (0.7, 0.1, 0.2), True, seed=20)
    assert abs(int(labels[sp.test_ids].sum()) - 20) <= 1
    allids = np.concatenate([sp.train_ids, sp.val_ids, sp.test_ids])
    assert sorted(allids.tolist()) == list(range(1000))


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 500), st.integers(0, 1000), st.booleans())
def test_split_partition(n, seed, stratified):
    labels = (np.random.default_rng(seed).random(n) < 0.1).astype(np.uint8)
    sp = split_nodes(n, labels, stratified=stratified, seed=seed)
    parts = [set(sp.train_ids.tolist()), set(sp.val_ids.tolist()), set(sp.test_ids.tolist())]
    assert not (parts[0] & parts[1]) and not (parts[0] & parts[2]) and not (parts[1] & parts[2])
    assert set().union(*parts) == set(range(n))


def test_split_bad_fractions():
    with pytest.raises(ValueError):
        split_nodes(10, fractions=(0.5, 0.5, 0.1))


@pytest.mark.parametrize(
    "text, expected",
    [("8GB", 8 * 10**9), ("1 GiB", 2**30), ("512MB", 512 * 10**6), ("1024", 1024), ("2KiB", 2048)],
)
def test_parse_bytes(text, expected):
    assert parse_bytes(text) == expected


def test_monitor_budget():
    with ResourceMonitor(budget_bytes=1) as mon:
        assert mon.exceeded
        with pytest.raises(BudgetExceeded):
            mon.check()
    with ResourceMonitor() as mon:
        mon.check()
    assert mon.peak > 0


@pytest.mark.parametrize("detector", ["degree", "knn", "mlpae"])
def test_run_benchmark_ok(seed_graph, detector):
    g, labels = seed_graph
    sp = split_nodes(g.n, labels)
    params = {"epochs": 5} if detector == "mlpae" else {}
    rep = run_benchmark(g, labels, DetectorSpec(detector, params), sp)
    assert rep.status == "ok"
    assert rep.k_used == int(labels.labels[sp.test_ids].sum())
    for m in rep.metrics():
        assert 0 <= m <= 1
    assert rep.runtime_seconds >= 0 and rep.peak_memory_bytes > 0


def test_run_benchmark_oom_and_error(seed_graph):
    g, labels = seed_graph
    sp = split_nodes(g.n, labels)
    rep = run_benchmark(g, labels, "knn", sp, Budgets(memory_bytes=10**6))
    assert rep.status == "oom_budget_exceeded" and rep.auc_roc is None
    bad = run_benchmark(g, labels, DetectorSpec("knn", {"k": 10**9}), sp)
    assert bad.status == "error" and bad.metrics() == (None, None, None) and bad.message


def test_report_round_trip_and_aggregate(tmp_path):
    ok = EvalReport("mlpae", "a", "ok", 1.0, 100, 0.9, 0.5, 0.4, 3)
    oom = EvalReport("mlpae", "b", "oom_budget_exceeded", 2.0, 200)
    err = EvalReport("knn", "a", "error", 0.1, 50, message="boom")
    ok.save(tmp_path / "r.json")
    assert EvalReport.load(tmp_path / "r.json") == ok
    paths = aggregate_reports([ok, oom, err], tmp_path / "tables")
    rows = list(csv.reader(open(tmp_path / "tables" / "auc_roc.csv")))
    assert rows == [["detector", "a", "b"], ["mlpae", "0.9", "OOM"], ["knn", "ERROR", ""]]
    assert len(paths) == 5
