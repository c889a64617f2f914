"""Scale expansion: grow a graph while keeping its anomaly ratio, degree
distribution, per-class attribute distributions and edge-to-node ratio.

Original nodes and edges are kept verbatim. New nodes get attributes sampled
from per-class diagonal GMMs and target degrees drawn from the original degree
distribution. New edges are realized by degree-proportional endpoint sampling
(each node appears in the endpoint pool once per unit of target degree), split
across edge/middle/core degree strata according to the mixing fractions
measured on the original edge set.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from gadforge.errors import ConstructionError
from gadforge.graph import AttributedGraph, NodeLabels, csr_from_pairs, degree_sequence
from gadforge.rng import stream
from gadforge.stats import GmmModel, KsMatrixReport, KsResult, fit_gmm, ks_matrix, ks_two_sample, sample_gmm

log = logging.getLogger(__name__)

STRATA = ("edge", "middle", "core")
ATTR_BLOCK_ROWS = 16384
EDGE_TOLERANCE = 0.01


def _round_ratio(num: int, den: int) -> int:
    """round(num/den), halves rounded up, in exact integer arithmetic."""
    return (2 * num + den) // (2 * den)


@dataclass
class ExpansionPlan:
    original_n: int
    original_edges: int
    original_anomalies: int
    target_n: int
    new_nodes: int
    new_anomalies: int
    new_normals: int
    target_edges: int
    strata_thresholds: tuple
    inter_stratum_edge_fractions: np.ndarray

    def to_dict(self):
        return {
            "original_n": self.original_n,
            "original_edges": self.original_edges,
            "original_anomalies": self.original_anomalies,
            "target_n": self.target_n,
            "new_nodes": self.new_nodes,
            "new_anomalies": self.new_anomalies,
            "new_normals": self.new_normals,
            "target_edges": self.target_edges,
            "strata_thresholds": list(self.strata_thresholds),
            "inter_stratum_edge_fractions": self.inter_stratum_edge_fractions.tolist(),
        }


def assign_strata(degrees, thresholds) -> np.ndarray:
    """0 = edge (< p50), 1 = middle ([p50, p90)), 2 = core (>= p90)."""
    p50, p90 = thresholds
    degrees = np.asarray(degrees)
    return np.where(degrees >= p90, 2, np.where(degrees >= p50, 1, 0)).astype(np.int64)


def plan_expansion(g: AttributedGraph, labels: NodeLabels, target_n: int) -> ExpansionPlan:
    n = g.n
    if target_n < n:
        raise ValueError(f"target_n={target_n} is smaller than the graph ({n} nodes)")
    if n == 0:
        raise ValueError("cannot expand an empty graph")
    n1 = labels.anomaly_count
    e = g.num_edges
    total_anomalies = _round_ratio(target_n * n1, n)
    new_nodes = target_n - n
    new_anomalies = total_anomalies - n1
    deg = degree_sequence(g)
    thresholds = tuple(float(t) for t in np.percentile(deg, [50, 90]))
    strata = assign_strata(deg, thresholds)
    fractions = np.zeros((3, 3))
    edges = g.edge_array()
    if len(edges):
        np.add.at(fractions, (strata[edges[:, 0]], strata[edges[:, 1]]), 0.5)
        np.add.at(fractions, (strata[edges[:, 1]], strata[edges[:, 0]]), 0.5)
        fractions /= len(edges)
    return ExpansionPlan(
        original_n=n,
        original_edges=e,
        original_anomalies=n1,
        target_n=target_n,
        new_nodes=new_nodes,
        new_anomalies=new_anomalies,
        new_normals=new_nodes - new_anomalies,
        target_edges=_round_ratio(target_n * e, n),
        strata_thresholds=thresholds,
        inter_stratum_edge_fractions=fractions,
    )


# -- attributes --------------------------------------------------------------

def _fill_class(out, rows, model, seed, tag, workers):
    if len(rows) == 0:
        return
    if model is None:
        raise ValueError(f"no fitted model for {tag} rows")
    blocks = range(0, len(rows), ATTR_BLOCK_ROWS)

    def work(start):
        idx = rows[start:start + ATTR_BLOCK_ROWS]
        sample = sample_gmm(model, len(idx), stream(seed, tag, start // ATTR_BLOCK_ROWS))
        np.clip(sample, 0.0, 1.0, out=sample)
        out[idx] = sample.astype(np.float32)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, blocks))
    else:
        for start in blocks:
            work(start)


def synthesize_attributes(
    plan: ExpansionPlan,
    gmm_normal: GmmModel | None,
    gmm_anomaly: GmmModel | None,
    seed: int,
    workers: int = 1,
    out=None,
):
    """Sample feature rows and labels for the new nodes.

    Anomalous positions are a seeded random subset of the new ids. Rows are
    generated in fixed-size blocks, each from its own stream, so the result is
    identical for any ``workers``. Values are clamped to [0, 1].
    Returns ``(rows, labels)``; ``rows`` is ``out`` when given.
    """
    m = plan.new_nodes
    d = (gmm_normal or gmm_anomaly).d if (gmm_normal or gmm_anomaly) else 0
    if out is None:
        out = np.empty((m, d), dtype=np.float32)
    new_labels = np.zeros(m, dtype=np.uint8)
    if m == 0:
        return out, new_labels
    perm = stream(seed, "expand/labels").permutation(m)
    new_labels[perm[:plan.new_anomalies]] = 1
    _fill_class(out, np.flatnonzero(new_labels == 0), gmm_normal, seed, "expand/attr/normal", workers)
    _fill_class(out, np.flatnonzero(new_labels == 1), gmm_anomaly, seed, "expand/attr/anomaly", workers)
    return out, new_labels


# -- edges -------------------------------------------------------------------

def _balance(fractions, supply, iters=500):
    """Symmetric iterative proportional fitting: scale the endpoint-count matrix so
    its row sums equal each stratum's stub supply."""
    A = fractions * supply.sum()
    for _ in range(iters):
        rows = A.sum(1)
        r = np.divide(supply, rows, out=np.zeros(3), where=rows > 0)
        A = A * np.sqrt(np.outer(r, r))
        if np.allclose(A.sum(1), supply, rtol=1e-12, atol=1e-9):
            break
    return A


class _EdgeSet:
    """Sorted canonical keys ``lo * N + hi`` of accepted edges."""

    def __init__(self, N):
        self.N = N
        self.keys = np.zeros(0, dtype=np.int64)

    def add(self, a, b, limit=None):
        """Accept pairs in order, skipping self-loops and duplicates, up to ``limit``
        acceptances; return the accept mask."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        key = lo * self.N + hi
        ok = lo != hi
        if len(self.keys):
            pos = np.minimum(np.searchsorted(self.keys, key), len(self.keys) - 1)
            ok &= self.keys[pos] != key
        first = np.zeros(len(key), dtype=bool)
        _, idx = np.unique(np.where(ok, key, -1), return_index=True)
        first[idx] = True
        ok &= first
        if limit is not None and ok.sum() > limit:
            ok[np.flatnonzero(ok)[limit:]] = False
        if ok.any():
            self.keys = np.sort(np.concatenate([self.keys, np.sort(key[ok])]), kind="stable")
        return ok

    def __len__(self):
        return len(self.keys)

    def pairs(self):
        lo = self.keys // self.N
        return np.column_stack([lo, self.keys - lo * self.N])


def _target_degrees(deg0, count, total, rng):
    """Stratified draws from the empirical degree distribution, nudged by +-1 so
    the stub total equals ``total``."""
    n = len(deg0)
    sorted_deg = np.sort(deg0)
    u = (rng.permutation(count) + rng.random(count)) / count
    tdeg = sorted_deg[np.minimum((u * n).astype(np.int64), n - 1)].astype(np.int64)
    diff = int(total - tdeg.sum())
    if diff > 0:
        np.add.at(tdeg, rng.integers(0, count, size=diff), 1)
    elif diff < 0:
        spare = np.repeat(np.arange(count), np.maximum(tdeg - 1, 0))
        take = min(-diff, len(spare))
        np.subtract.at(tdeg, spare[rng.choice(len(spare), size=take, replace=False)], 1)
    return tdeg


def construct_edges(
    plan: ExpansionPlan,
    g: AttributedGraph,
    new_features,
    seed: int,
    max_proposal_factor: int = 10,
) -> AttributedGraph:
    """Return the expanded graph: original nodes/edges plus ``plan.new_nodes``
    nodes wired to bring the edge count to ``plan.target_edges``.

    ``new_features`` is either the ``(new_nodes, d)`` block for the new rows or
    the full ``(target_n, d)`` matrix with the original rows already in place.
    """
    n, N = g.n, plan.target_n
    new_features = np.asarray(new_features, dtype=np.float32)
    if new_features.shape[0] == N:
        features = new_features
    else:
        if new_features.shape != (plan.new_nodes, g.d):
            raise ValueError(f"new_features has shape {new_features.shape}, expected ({plan.new_nodes}, {g.d})")
        features = np.concatenate([g.features, new_features])
    needed = plan.target_edges - g.num_edges
    if plan.new_nodes == 0:
        return AttributedGraph(g.row_offsets, g.col_indices, features)
    if needed <= 0:
        return AttributedGraph(*_merge_csr(g, np.zeros((0, 2), dtype=np.int64), N), features)

    rng = stream(seed, "expand/edges")
    deg0 = degree_sequence(g)
    tdeg = _target_degrees(deg0, plan.new_nodes, 2 * needed, rng)
    new_ids = np.arange(n, N, dtype=np.int64)
    stub_owner = np.repeat(new_ids, tdeg)
    stub_stratum = np.repeat(assign_strata(tdeg, plan.strata_thresholds), tdeg)
    pools = [rng.permutation(stub_owner[stub_stratum == s]) for s in range(3)]
    supply = np.array([len(p) for p in pools], dtype=np.float64)

    A = _balance(plan.inter_stratum_edge_fractions, supply)
    counts = np.zeros((3, 3), dtype=np.int64)
    for s in range(3):
        counts[s, s] = int(np.floor(A[s, s] / 2))
        for t in range(s + 1, 3):
            counts[s, t] = int(np.floor(A[s, t]))
    def used(s):
        return counts[s, s] + sum(counts[min(s, t), max(s, t)] for t in range(3))

    for s in range(3):
        # floors can only undershoot; guard against round-off overshoot anyway
        while used(s) > supply[s]:
            t = max(range(3), key=lambda t: counts[min(s, t), max(s, t)])
            counts[min(s, t), max(s, t)] -= 1

    ptr = [0, 0, 0]

    def take(s, k):
        out = pools[s][ptr[s]:ptr[s] + k]
        ptr[s] += k
        return out

    src, dst = [], []
    for s in range(3):
        for t in range(s, 3):
            k = int(counts[s, t])
            if k == 0:
                continue
            if s == t:
                both = take(s, 2 * k)
                src.append(both[:k])
                dst.append(both[k:])
            else:
                src.append(take(s, k))
                dst.append(take(t, k))
    src = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dst) if dst else np.zeros(0, dtype=np.int64)
    leftover = [np.concatenate([pools[s][ptr[s]:] for s in range(3)])]

    accepted = _EdgeSet(N)
    proposals = len(src)
    ok = accepted.add(src, dst)
    leftover.append(src[~ok])
    leftover.append(dst[~ok])
    leftover = np.concatenate(leftover)
    budget = max_proposal_factor * needed

    # rematch rejected and unmatched stubs among themselves
    for _ in range(32):
        if len(leftover) < 2 or len(accepted) >= needed:
            break
        leftover = rng.permutation(leftover)
        half = len(leftover) // 2
        a, b = leftover[:half], leftover[half:2 * half]
        proposals += half
        ok = accepted.add(a, b, limit=needed - len(accepted))
        if not ok.any():
            break
        leftover = np.concatenate([a[~ok], b[~ok], leftover[2 * half:]])

    # remaining stubs attach to original nodes, chosen proportionally to degree
    p_orig = deg0 / deg0.sum() if deg0.sum() > 0 else None
    while len(accepted) < needed and len(leftover) and p_orig is not None and proposals < budget:
        k = min(len(leftover), needed - len(accepted))
        a = leftover[:k]
        b = rng.choice(n, size=k, p=p_orig)
        proposals += k
        ok = accepted.add(a, b, limit=needed - len(accepted))
        leftover = np.concatenate([a[~ok], leftover[k:]])

    # last resort: Chung-Lu proposals with at least one new endpoint
    weights_new = tdeg / tdeg.sum()
    weights_all = np.concatenate([deg0, tdeg]).astype(np.float64)
    weights_all /= weights_all.sum()
    while len(accepted) < needed and proposals < budget:
        k = min(2 * (needed - len(accepted)), budget - proposals)
        a = n + rng.choice(plan.new_nodes, size=k, p=weights_new)
        b = rng.choice(N, size=k, p=weights_all)
        proposals += k
        accepted.add(a, b, limit=needed - len(accepted))

    total = g.num_edges + len(accepted)
    if total < (1 - EDGE_TOLERANCE) * plan.target_edges:
        raise ConstructionError(
            f"reached {total} edges of target {plan.target_edges} after {proposals} proposals"
        )
    log.info("expanded to %d nodes / %d edges (%d proposals)", N, total, proposals)
    offsets, cols = _merge_csr(g, accepted.pairs(), N)
    return AttributedGraph(offsets, cols, features)


def _merge_csr(g, new_edges, N):
    old = g.edge_array()
    u = np.concatenate([old[:, 0], new_edges[:, 0]])
    v = np.concatenate([old[:, 1], new_edges[:, 1]])
    return csr_from_pairs(u, v, N)


# -- validation ----------------------------------------------------------------

@dataclass
class ExpansionValidation:
    ratio_original: float
    ratio_expanded: float
    anomaly_count_expected: int
    anomaly_count_actual: int
    ratio_ok: bool
    degree: KsResult
    normal_attributes: KsMatrixReport | None
    anomaly_attributes: KsMatrixReport | None
    degree_ok: bool
    normal_ok: bool
    anomaly_ok: bool

    @property
    def passed(self) -> bool:
        return self.ratio_ok and self.degree_ok and self.normal_ok and self.anomaly_ok

    def to_dict(self):
        return {
            "passed": self.passed,
            "anomaly_ratio": {
                "original": self.ratio_original,
                "expanded": self.ratio_expanded,
                "expected_count": self.anomaly_count_expected,
                "actual_count": self.anomaly_count_actual,
                "passed": self.ratio_ok,
            },
            "degree_ks": {**self.degree.to_dict(), "passed": self.degree_ok},
            "normal_attributes_ks": self.normal_attributes.to_dict() if self.normal_attributes else None,
            "anomaly_attributes_ks": self.anomaly_attributes.to_dict() if self.anomaly_attributes else None,
        }


def _class_check(A, B):
    if len(A) == 0 and len(B) == 0:
        return None, True
    if len(A) == 0 or len(B) == 0:
        return None, False
    report = ks_matrix(A, B)
    return report, report.passed


def validate_expansion(
    original: AttributedGraph,
    expanded: AttributedGraph,
    labels: NodeLabels,
    expanded_labels: NodeLabels,
) -> ExpansionValidation:
    """Check anomaly ratio (within one node), degree KS and per-class attribute KS."""
    n1, ns = labels.anomaly_count, expanded.n
    expected = _round_ratio(ns * n1, original.n)
    actual = expanded_labels.anomaly_count
    degree = ks_two_sample(degree_sequence(expanded), degree_sequence(original))
    normal, normal_ok = _class_check(
        expanded.features[expanded_labels.labels == 0], original.features[labels.labels == 0]
    )
    anomaly, anomaly_ok = _class_check(
        expanded.features[expanded_labels.labels == 1], original.features[labels.labels == 1]
    )
    return ExpansionValidation(
        ratio_original=labels.ratio,
        ratio_expanded=expanded_labels.ratio,
        anomaly_count_expected=expected,
        anomaly_count_actual=actual,
        ratio_ok=abs(actual - expected) <= 1,
        degree=degree,
        normal_attributes=normal,
        anomaly_attributes=anomaly,
        degree_ok=degree.p_value > 0.05,
        normal_ok=normal_ok,
        anomaly_ok=anomaly_ok,
    )


# -- pipeline ----------------------------------------------------------------

@dataclass
class ExpansionResult:
    graph: AttributedGraph
    labels: NodeLabels
    plan: ExpansionPlan
    gmm_normal: GmmModel | None
    gmm_anomaly: GmmModel | None
    validation: ExpansionValidation | None


def expand_graph(
    g: AttributedGraph,
    labels: NodeLabels,
    target_n: int,
    seed: int = 20,
    k_candidates=(1, 2, 3, 4, 5),
    workers: int = 1,
    validate: bool = True,
) -> ExpansionResult:
    plan = plan_expansion(g, labels, target_n)
    models = []
    for cls, count in ((0, plan.new_normals), (1, plan.new_anomalies)):
        rows = g.features[labels.labels == cls]
        if count > 0 and len(rows) == 0:
            raise ValueError(f"cannot synthesize class {cls}: no examples in the source graph")
        models.append(fit_gmm(rows, k_candidates, seed=seed) if count > 0 else None)
    features = np.empty((plan.target_n, g.d), dtype=np.float32)
    features[:g.n] = g.features
    _, new_labels = synthesize_attributes(plan, models[0], models[1], seed, workers, out=features[g.n:])
    expanded = construct_edges(plan, g, features, seed)
    expanded_labels = NodeLabels(np.concatenate([labels.labels, new_labels]))
    validation = validate_expansion(g, expanded, labels, expanded_labels) if validate else None
    return ExpansionResult(expanded, expanded_labels, plan, models[0], models[1], validation)
