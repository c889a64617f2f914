"""Dataset directories: cleaned graph files plus a manifest covering them."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gadforge import io
from gadforge.errors import ConsistencyError
from gadforge.graph import AttributedGraph, NodeLabels, VariantManifest, build_graph

EDGES = "edges.tsv"
FEATURES = "features.gadf"
LABELS = "labels.tsv"
MANIFEST = "manifest.json"
MASK = "mask.gadm"
ID_MAP = "id_map.tsv"


@dataclass
class Dataset:
    graph: AttributedGraph
    labels: NodeLabels
    manifest: VariantManifest
    mask: np.ndarray | None = None
    path: Path | None = None


def save_dataset(path, graph, labels, manifest, mask=None, extra_files=None) -> VariantManifest:
    """Write a dataset directory and fill ``manifest.content_checksums``.

    ``extra_files`` maps file name to a callable ``write(path)``.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    io.write_edge_list(path / EDGES, graph.edge_array())
    io.write_features(path / FEATURES, graph.features)
    io.write_labels(path / LABELS, labels.labels)
    names = [EDGES, FEATURES, LABELS]
    if mask is not None:
        io.write_mask(path / MASK, mask)
        names.append(MASK)
    for name, writer in (extra_files or {}).items():
        writer(path / name)
        names.append(name)
    manifest.content_checksums = {name: io.sha256_file(path / name) for name in names}
    manifest.save(path / MANIFEST)
    return manifest


def load_dataset(path, verify=True) -> Dataset:
    path = Path(path)
    manifest_path = path / MANIFEST
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest at {manifest_path}")
    manifest = VariantManifest.load(manifest_path)
    if verify:
        for name, digest in manifest.content_checksums.items():
            actual = io.sha256_file(path / name)
            if actual != digest:
                raise ConsistencyError(f"{path / name}: checksum mismatch")
    features = io.read_features(path / FEATURES)
    n = features.shape[0]
    edges = io.read_edge_list(path / EDGES)
    labels = io.read_labels(path / LABELS, n)
    graph, node_labels = build_graph(edges, n, features, labels)
    mask = io.read_mask(path / MASK) if (path / MASK).exists() else None
    return Dataset(graph, node_labels, manifest, mask, path)


def parent_record(path) -> dict:
    """Reference to an input dataset directory (or raw manifest file) for provenance."""
    path = Path(path).resolve()
    target = path / MANIFEST if path.is_dir() else path
    return {"path": str(path), "manifest_sha256": io.sha256_file(target)}


def data_root() -> Path | None:
    root = os.environ.get("GADFORGE_DATA_ROOT")
    return Path(root) if root else None


def resolve(path) -> Path:
    """Resolve a relative path against ``$GADFORGE_DATA_ROOT`` when it is not found locally."""
    p = Path(path)
    root = data_root()
    if not p.is_absolute() and not p.exists() and root is not None:
        return root / p
    return p
