"""Raw dataset parsing and the standard cleaning pipeline.

Cleaning order: drop self-loops and duplicate edges, remove isolated nodes and
compact ids, then min-max normalize every feature column on the retained nodes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gadforge import io
from gadforge.errors import DataError, MalformedInputError, ShapeError
from gadforge.graph import AttributedGraph, NodeLabels, VariantManifest, build_graph, degree_sequence

log = logging.getLogger(__name__)

_COLUMN_BLOCK = 64


@dataclass
class RawDataset:
    source_id: str
    edge_path: Path
    feature_path: Path
    label_path: Path
    declared_n: int
    declared_d: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray


def _read_raw_features(path: Path, fmt: str) -> np.ndarray:
    if fmt == "gadf":
        return io.read_features(path)
    if fmt == "npy":
        return np.load(path, allow_pickle=False)
    raise ValueError(f"unsupported feature_format {fmt!r}")


def parse_dataset(manifest_path) -> RawDataset:
    """Load a raw dataset described by a JSON manifest and validate its shapes.

    Manifest keys: ``edges``, ``features``, ``labels`` (paths relative to the
    manifest), ``n``, ``d``, optional ``source_id`` and ``feature_format``
    (``gadf`` or ``npy``).
    """
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    paths = {}
    for key in ("edges", "features", "labels"):
        if key not in doc:
            raise DataError(f"{manifest_path}: missing key {key!r}")
        p = base / doc[key]
        if not p.exists():
            raise FileNotFoundError(f"{p} (declared as {key!r} in {manifest_path})")
        paths[key] = p
    n, d = int(doc["n"]), int(doc["d"])
    features = _read_raw_features(paths["features"], doc.get("feature_format", "gadf"))
    if features.shape != (n, d):
        raise ShapeError(f"features have shape {features.shape}, manifest declares ({n}, {d})")
    edges = io.read_edge_list(paths["edges"])
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise MalformedInputError(f"{paths['edges']}: node id outside 0..{n - 1}")
    labels = io.read_labels(paths["labels"], n)
    return RawDataset(
        source_id=doc.get("source_id", manifest_path.parent.name),
        edge_path=paths["edges"],
        feature_path=paths["features"],
        label_path=paths["labels"],
        declared_n=n,
        declared_d=d,
        edges=edges,
        features=features,
        labels=labels,
    )


def minmax_normalize(features) -> np.ndarray:
    """Scale every column to [0, 1]; constant columns become zeros. Returns float32."""
    x = np.asarray(features)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {x.shape}")
    out = np.empty(x.shape, dtype=np.float32)
    for s in range(0, x.shape[1], _COLUMN_BLOCK):
        block = np.asarray(x[:, s:s + _COLUMN_BLOCK], dtype=np.float64)
        if not np.isfinite(block).all():
            col = s + int(np.flatnonzero(~np.isfinite(block).all(axis=0))[0])
            raise DataError(f"non-finite value in feature column {col}")
        if block.shape[0] == 0:
            continue
        lo = block.min(axis=0)
        span = block.max(axis=0) - lo
        scaled = np.zeros_like(block)
        ok = span > 0
        scaled[:, ok] = (block[:, ok] - lo[ok]) / span[ok]
        out[:, s:s + _COLUMN_BLOCK] = scaled
    return out


def clean_graph(graph: AttributedGraph, labels: NodeLabels, features=None):
    """Remove isolated nodes, compact ids, and normalize features.

    ``features`` overrides ``graph.features`` (e.g. raw float64 values, so that
    normalization happens before the cast to 32 bits).
    Returns ``(graph, labels, id_map)`` where ``id_map[new] = old``.
    """
    feats = graph.features if features is None else features
    keep = np.flatnonzero(degree_sequence(graph) > 0)
    remap = np.full(graph.n, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    edges = graph.edge_array()
    normalized = minmax_normalize(feats[keep])
    g, lab = build_graph(remap[edges], len(keep), normalized, labels.labels[keep])
    return g, lab, keep


def preprocess(raw: RawDataset):
    """Run the cleaning pipeline on a parsed raw dataset.

    Returns ``(graph, labels, manifest, id_map)``.
    """
    feats = np.asarray(raw.features)
    if not np.isfinite(feats).all():
        row, col = np.argwhere(~np.isfinite(feats))[0]
        raise DataError(f"non-finite feature value at node {row}, dimension {col}")
    n = raw.declared_n
    topology, labels = build_graph(raw.edges, n, np.empty((n, 0), dtype=np.float32), raw.labels)
    self_loops = int(np.count_nonzero(raw.edges[:, 0] == raw.edges[:, 1]))
    duplicates = len(raw.edges) - self_loops - topology.num_edges
    g, lab, id_map = clean_graph(topology, labels, feats)
    log.info(
        "ingest %s: %d nodes (%d isolated removed), %d edges, d=%d",
        raw.source_id, g.n, n - g.n, g.num_edges, g.d,
    )
    manifest = VariantManifest(
        source_id=raw.source_id,
        transform="ingest",
        parameters={
            "self_loops_removed": self_loops,
            "duplicate_edges_removed": int(duplicates),
            "isolated_nodes_removed": int(n - g.n),
            "normalization": "minmax per column, computed after isolated-node removal",
            "id_map": "id_map.tsv",
            "n": g.n,
            "num_edges": g.num_edges,
            "d": g.d,
            "anomaly_ratio": lab.ratio,
        },
        seed=None,
    )
    return g, lab, manifest, id_map


def write_id_map(path, id_map) -> None:
    with open(path, "w") as fh:
        fh.write("# new_id\toriginal_id\n")
        fh.write("".join(f"{i}\t{o}\n" for i, o in enumerate(np.asarray(id_map).tolist())))
