"""Seeded synthetic seed graphs for tests, demos and smoke runs."""

from __future__ import annotations

import numpy as np

from gadforge.graph import build_graph, degree_sequence
from gadforge.ingest import minmax_normalize
from gadforge.rng import stream


def chung_lu_edges(weights, num_edges: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``num_edges`` endpoint pairs with probability proportional to weight."""
    p = np.asarray(weights, dtype=np.float64)
    p = p / p.sum()
    return np.column_stack([rng.choice(len(p), num_edges, p=p), rng.choice(len(p), num_edges, p=p)])


def make_seed_graph(
    n: int = 2000,
    d: int = 16,
    anomaly_ratio: float = 0.05,
    edges_per_node: float = 10.0,
    exponent: float = 2.5,
    seed: int = 20,
):
    """Build a connected-ish attributed graph with power-law degrees.

    Normal rows come from a three-component diagonal mixture, anomalous rows from
    a single shifted Gaussian; features are min-max normalized. Nodes left
    isolated by the edge draw are attached to one random neighbour so that the
    graph keeps exactly ``n`` nodes after cleaning.
    Returns ``(AttributedGraph, NodeLabels)``.
    """
    rng = stream(seed, "synthetic/topology")
    u = rng.random(n)
    w = (1.0 - u) ** (-1.0 / (exponent - 1.0))
    w = np.minimum(w, np.sqrt(n))
    m = int(round(n * edges_per_node))
    edges = chung_lu_edges(w, m, rng)
    g0, _ = build_graph(edges, n, np.zeros((n, 0), dtype=np.float32))
    # top up to the requested edge count after self-loop/duplicate removal
    extra = m - g0.num_edges
    if extra > 0:
        edges = np.concatenate([g0.edge_array(), chung_lu_edges(w, 2 * extra, rng)])
        g0, _ = build_graph(edges, n, np.zeros((n, 0), dtype=np.float32))
        keep = g0.edge_array()
        edges = keep[np.sort(rng.permutation(len(keep))[:m])] if len(keep) > m else keep
    else:
        edges = g0.edge_array()
    g0, _ = build_graph(edges, n, np.zeros((n, 0), dtype=np.float32))
    isolated = np.flatnonzero(degree_sequence(g0) == 0)
    if len(isolated):
        partners = rng.integers(0, n, size=len(isolated))
        partners = np.where(partners == isolated, (partners + 1) % n, partners)
        edges = np.concatenate([edges, np.column_stack([isolated, partners])])

    frng = stream(seed, "synthetic/features")
    labels = np.zeros(n, dtype=np.uint8)
    n1 = int(round(anomaly_ratio * n))
    labels[frng.permutation(n)[:n1]] = 1
    centers = frng.uniform(-2.0, 2.0, size=(3, d))
    scales = frng.uniform(0.4, 0.8, size=(3, d))
    comp = frng.choice(3, size=n, p=[0.5, 0.3, 0.2])
    x = centers[comp] + scales[comp] * frng.standard_normal((n, d))
    anomaly_center = frng.uniform(-1.0, 1.0, size=d) + 1.5
    idx = np.flatnonzero(labels)
    x[idx] = anomaly_center + 0.7 * frng.standard_normal((len(idx), d))
    return build_graph(edges, n, minmax_normalize(x), labels)
