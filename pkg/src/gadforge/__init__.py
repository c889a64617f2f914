"""Benchmark-variant forge and evaluation harness for graph anomaly detection."""

from gadforge.errors import (
    BudgetExceeded,
    ConsistencyError,
    ConstructionError,
    DataError,
    DegenerateColumnError,
    GadError,
    MalformedInputError,
    ShapeError,
)
from gadforge.graph import (
    AttributedGraph,
    NodeLabels,
    VariantManifest,
    build_graph,
    degree_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "AttributedGraph",
    "BudgetExceeded",
    "ConsistencyError",
    "ConstructionError",
    "DataError",
    "DegenerateColumnError",
    "GadError",
    "MalformedInputError",
    "NodeLabels",
    "ShapeError",
    "VariantManifest",
    "build_graph",
    "degree_sequence",
]
