"""Anomaly-ratio adjustment by demoting anomalies.

A retained subset keeps label 1 and its attributes. Every other anomaly is
relabelled normal and its row is replaced by the mean of its originally-normal
neighbours' rows, or by the mean of all originally-normal rows when it has no
such neighbour. All demoted rows are computed from the frozen input matrix, so
the order of conversion never matters.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from gadforge.graph import AttributedGraph, NodeLabels
from gadforge.rng import stream
from gadforge.stats import kmeans

STRATEGIES = ("core_cluster", "edge_cluster", "random")
_ALIASES = {"core": "core_cluster", "edge": "edge_cluster"}


@dataclass(frozen=True)
class RetentionStrategy:
    kind: str = "core_cluster"
    cluster_k: int = 5

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in STRATEGIES:
            raise ValueError(f"unknown retention strategy {self.kind!r}")
        if self.cluster_k < 1:
            raise ValueError("cluster_k must be >= 1")
        object.__setattr__(self, "kind", kind)


@dataclass
class RatioAdjustment:
    target_ratio: float
    retained: np.ndarray
    demoted: np.ndarray
    strategy: RetentionStrategy
    cluster_sizes: list = field(default_factory=list)

    def retained_checksum(self) -> str:
        return hashlib.sha256(np.asarray(self.retained, dtype="<i8").tobytes()).hexdigest()


def retained_count(target_ratio: float, n: int) -> int:
    """round(target_ratio * n) with halves rounded up, at least 1."""
    if not 0 < target_ratio < 1:
        raise ValueError(f"target ratio must lie in (0, 1), got {target_ratio}")
    return max(1, int(np.floor(target_ratio * n + 0.5)))


def select_retained(anomaly_features, strategy, target_count: int, seed: int = 20):
    """Positions (rows of ``anomaly_features``) of the anomalies to keep, ascending.

    Cluster strategies run k-means on the anomaly rows and take whole clusters in
    size order (largest first for core, smallest first for edge; ties by cluster
    index), truncating the last cluster in ascending row order.
    Returns ``(positions, cluster_sizes)``.
    """
    if isinstance(strategy, str):
        strategy = RetentionStrategy(strategy)
    X = np.asarray(anomaly_features, dtype=np.float64)
    m = X.shape[0]
    if not 1 <= target_count <= m:
        raise ValueError(f"target_count must lie in 1..{m}, got {target_count}")
    if strategy.kind == "random":
        pick = stream(seed, "ratio/random").choice(m, size=target_count, replace=False)
        return np.sort(pick), []
    K = min(strategy.cluster_k, m)
    clusters = kmeans(X, K, seed=seed)
    sizes = clusters.sizes
    if strategy.kind == "core_cluster":
        order = sorted(range(K), key=lambda k: (-sizes[k], k))
    else:
        order = sorted(range(K), key=lambda k: (sizes[k], k))
    chosen = []
    for k in order:
        members = np.flatnonzero(clusters.assignment == k)
        chosen.append(members[:target_count - sum(len(c) for c in chosen)])
        if sum(len(c) for c in chosen) == target_count:
            break
    return np.sort(np.concatenate(chosen)), sizes.tolist()


def demoted_rows(g: AttributedGraph, original_labels, demoted) -> np.ndarray:
    """Replacement rows (float32) for ``demoted`` nodes, from originally-normal neighbours."""
    labels = np.asarray(original_labels)
    demoted = np.asarray(demoted, dtype=np.int64)
    normal = labels == 0
    starts = g.row_offsets[demoted]
    counts = g.row_offsets[demoted + 1] - starts
    rows = np.repeat(np.arange(len(demoted)), counts)
    entries = np.arange(counts.sum()) + np.repeat(starts - (np.cumsum(counts) - counts), counts)
    cols = g.col_indices[entries]
    keep = normal[cols]
    rows, cols = rows[keep], cols[keep]
    S = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(demoted), g.n))
    X = g.features.astype(np.float64)
    sums = S @ X
    nb = np.asarray(S.sum(axis=1)).ravel()
    global_mean = X[normal].mean(axis=0) if normal.any() else np.zeros(g.d)
    out = np.where(nb[:, None] > 0, sums / np.maximum(nb, 1)[:, None], global_mean[None, :])
    return out.astype(np.float32)


def adjust_ratio(
    g: AttributedGraph,
    labels: NodeLabels,
    target_ratio: float,
    strategy="core_cluster",
    seed: int = 20,
):
    """Lower the anomaly ratio to ``target_ratio``.

    Returns ``(graph, labels, adjustment)``; the returned graph shares the input
    topology arrays and carries the rewritten feature matrix.
    """
    if isinstance(strategy, str):
        strategy = RetentionStrategy(strategy)
    n = g.n
    current = labels.anomaly_count
    if target_ratio > labels.ratio:
        raise ValueError(f"target ratio {target_ratio} exceeds the current ratio {labels.ratio:.6f}")
    target = retained_count(target_ratio, n)
    if target > current:
        raise ValueError(f"target count {target} exceeds the {current} anomalies present")
    anomaly_ids = labels.anomaly_ids()
    pos, sizes = select_retained(g.features[anomaly_ids], strategy, target, seed)
    retained = anomaly_ids[pos]
    demoted = np.setdiff1d(anomaly_ids, retained)
    features = np.array(g.features, copy=True)
    if len(demoted):
        features[demoted] = demoted_rows(g, labels.labels, demoted)
    new_labels = np.zeros(n, dtype=np.uint8)
    new_labels[retained] = 1
    adjustment = RatioAdjustment(target_ratio, retained, demoted, strategy, sizes)
    return g.with_features(features), NodeLabels(new_labels), adjustment
