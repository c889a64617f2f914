"""Immutable attributed graph in compressed sparse row form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gadforge.errors import MalformedInputError, ShapeError

TRANSFORMS = ("ingest", "expand", "ratio_adjust", "inject_missing", "impute")


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected graph with a dense float32 feature matrix.

    ``col_indices[row_offsets[i]:row_offsets[i+1]]`` lists the neighbours of
    node ``i`` in strictly increasing order. Every undirected edge is stored in
    both directions.
    """

    row_offsets: np.ndarray
    col_indices: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(np.asarray(self.row_offsets, dtype=np.int64)))
        object.__setattr__(self, "col_indices", _frozen(np.asarray(self.col_indices, dtype=np.int64)))
        feats = np.asarray(self.features, dtype=np.float32)
        if feats.ndim != 2:
            raise ShapeError(f"features must be 2-d, got shape {feats.shape}")
        object.__setattr__(self, "features", _frozen(feats))
        if len(self.row_offsets) != feats.shape[0] + 1:
            raise ShapeError(
                f"features have {feats.shape[0]} rows but CSR describes {len(self.row_offsets) - 1} nodes"
            )

    @property
    def n(self) -> int:
        return len(self.row_offsets) - 1

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.col_indices) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def row_of_entries(self) -> np.ndarray:
        """Source node of every CSR entry."""
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_offsets))

    def edge_array(self) -> np.ndarray:
        """Undirected edges as an ``(e, 2)`` array with ``u < v``, sorted."""
        src = self.row_of_entries()
        keep = src < self.col_indices
        return np.column_stack([src[keep], self.col_indices[keep]])

    def with_features(self, features) -> "AttributedGraph":
        return AttributedGraph(self.row_offsets, self.col_indices, features)

    def check(self) -> None:
        """Raise ``AssertionError`` if any CSR invariant is violated."""
        ro, ci = self.row_offsets, self.col_indices
        assert ro[0] == 0 and ro[-1] == len(ci)
        assert np.all(np.diff(ro) >= 0)
        if len(ci) == 0:
            return
        assert ci.min() >= 0 and ci.max() < self.n
        src = self.row_of_entries()
        assert np.all(src != ci), "self-loop"
        # strictly increasing within rows: the flat key src*n+col must be strictly increasing
        key = src * self.n + ci
        assert np.all(np.diff(key) > 0), "unsorted or duplicate entries"
        rev = np.sort(ci * self.n + src)
        assert np.array_equal(rev, key), "adjacency is not symmetric"


@dataclass(frozen=True, eq=False)
class NodeLabels:
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1:
            raise ShapeError("labels must be 1-d")
        if lab.size and not np.isin(lab, (0, 1)).all():
            raise MalformedInputError("labels must be 0 or 1")
        object.__setattr__(self, "labels", _frozen(lab.astype(np.uint8)))

    def __len__(self):
        return len(self.labels)

    @property
    def anomaly_count(self) -> int:
        return int(self.labels.sum())

    @property
    def ratio(self) -> float:
        return self.anomaly_count / len(self.labels) if len(self.labels) else 0.0

    def normal_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)

    def anomaly_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)


@dataclass
class VariantManifest:
    """Provenance record for one dataset variant."""

    source_id: str
    transform: str
    parameters: dict = field(default_factory=dict)
    seed: int | None = None
    content_checksums: dict = field(default_factory=dict)
    parent: dict | None = None
    validation: dict | None = None

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")

    def to_dict(self) -> dict:
        out = {
            "source_id": self.source_id,
            "transform": self.transform,
            "parameters": self.parameters,
            "seed": self.seed,
            "content_checksums": dict(sorted(self.content_checksums.items())),
            "parent": self.parent,
        }
        if self.validation is not None:
            out["validation"] = self.validation
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "VariantManifest":
        return cls(
            source_id=doc["source_id"],
            transform=doc["transform"],
            parameters=doc.get("parameters", {}),
            seed=doc.get("seed"),
            content_checksums=doc.get("content_checksums", {}),
            parent=doc.get("parent"),
            validation=doc.get("validation"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n")

    @classmethod
    def load(cls, path) -> "VariantManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def csr_from_pairs(u, v, n: int):
    """Symmetrize, drop self-loops and duplicates, and return ``(row_offsets, col_indices)``."""
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    keep = u != v
    u, v = u[keep], v[keep]
    key = np.concatenate([u * n + v, v * n + u])
    key = np.unique(key)
    src = key // n
    col = key - src * n
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    return offsets, col


def build_graph(edges, n: int, features, labels=None):
    """Build a clean undirected graph from an edge list.

    Duplicate edges, reversed duplicates and self-loops are dropped silently.
    Returns ``(AttributedGraph, NodeLabels)``; labels default to all-normal.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[0] != n:
        raise ShapeError(f"features have shape {features.shape}, expected ({n}, d)")
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise MalformedInputError(f"edge list references node ids outside 0..{n - 1}")
    if labels is None:
        labels = np.zeros(n, dtype=np.uint8)
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels have shape {labels.shape}, expected ({n},)")
    offsets, cols = csr_from_pairs(edges[:, 0], edges[:, 1], n)
    return AttributedGraph(offsets, cols, features), NodeLabels(labels)


def degree_sequence(g: AttributedGraph) -> np.ndarray:
    return np.diff(g.row_offsets)
