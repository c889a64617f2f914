"""On-disk formats: edge lists, GADF features, label files, GADM masks, GADW checkpoints."""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from gadforge.errors import ConsistencyError, MalformedInputError, ShapeError

FEATURE_MAGIC = b"GADF"
MASK_MAGIC = b"GADM"
CHECKPOINT_MAGIC = b"GADW"


def sha256_file(path, chunk=1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while block := fh.read(chunk):
            h.update(block)
    return h.hexdigest()


# -- edge lists ---------------------------------------------------------------

def read_edge_list(path) -> np.ndarray:
    """Read ``u<TAB>v`` lines (``#`` comments allowed) into an ``(m, 2)`` int64 array."""
    try:
        edges = np.loadtxt(path, dtype=np.int64, comments="#", delimiter="\t", ndmin=2)
    except ValueError as exc:
        raise MalformedInputError(f"{path}: {exc}") from None
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if edges.shape[1] != 2:
        raise MalformedInputError(f"{path}: expected two columns, got {edges.shape[1]}")
    return edges


def write_edge_list(path, edges) -> None:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    with open(path, "w") as fh:
        fh.write("# u\tv\n")
        step = 1 << 18
        for s in range(0, len(edges), step):
            block = edges[s:s + step]
            fh.write("\n".join(f"{a}\t{b}" for a, b in block.tolist()))
            fh.write("\n")


# -- features -----------------------------------------------------------------

def write_features(path, features) -> None:
    x = np.ascontiguousarray(features, dtype="<f4")
    n, d = x.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<II", n, d) + b"\0" * 4)
        x.tofile(fh)


def read_features(path, mmap=False) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
    if len(header) != 16 or header[:4] != FEATURE_MAGIC:
        raise MalformedInputError(f"{path}: not a GADF feature file")
    n, d = struct.unpack("<II", header[4:12])
    expected = 16 + 4 * n * d
    size = Path(path).stat().st_size
    if size != expected:
        raise ShapeError(f"{path}: header declares {n}x{d} but file holds {size - 16} payload bytes")
    if mmap:
        return np.memmap(path, dtype="<f4", mode="r", offset=16, shape=(n, d))
    return np.fromfile(path, dtype="<f4", offset=16).reshape(n, d).astype(np.float32, copy=False)


# -- labels -------------------------------------------------------------------

def read_labels(path, n: int) -> np.ndarray:
    """Read ``node_id<TAB>label`` lines.

    Repeated identical entries collapse; conflicting repeats raise
    ``ConsistencyError``. Every node ``0..n-1`` must be labelled exactly once.
    """
    try:
        raw = np.loadtxt(path, dtype=np.int64, comments="#", delimiter="\t", ndmin=2)
    except ValueError as exc:
        raise MalformedInputError(f"{path}: {exc}") from None
    if raw.size == 0:
        raw = np.zeros((0, 2), dtype=np.int64)
    if raw.shape[1] != 2:
        raise MalformedInputError(f"{path}: expected two columns")
    ids, vals = raw[:, 0], raw[:, 1]
    if not np.isin(vals, (0, 1)).all():
        bad = vals[~np.isin(vals, (0, 1))][0]
        raise MalformedInputError(f"{path}: non-binary label value {bad}")
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise MalformedInputError(f"{path}: node id outside 0..{n - 1}")
    pairs = np.unique(raw, axis=0)
    uid, counts = np.unique(pairs[:, 0], return_counts=True)
    if (counts > 1).any():
        raise ConsistencyError(f"{path}: conflicting labels for node {int(uid[counts > 1][0])}")
    if len(uid) != n:
        raise ShapeError(f"{path}: {len(uid)} labelled nodes, expected {n}")
    labels = np.empty(n, dtype=np.uint8)
    labels[pairs[:, 0]] = pairs[:, 1]
    return labels


def write_labels(path, labels) -> None:
    labels = np.asarray(labels)
    with open(path, "w") as fh:
        fh.write("".join(f"{i}\t{int(v)}\n" for i, v in enumerate(labels.tolist())))


# -- masks --------------------------------------------------------------------

def write_mask(path, cells) -> None:
    cells = np.asarray(cells, dtype=np.uint32).reshape(-1, 2)
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    with open(path, "wb") as fh:
        fh.write(MASK_MAGIC + struct.pack("<I", len(cells)))
        np.ascontiguousarray(cells[order], dtype="<u4").tofile(fh)


def read_mask(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8 or header[:4] != MASK_MAGIC:
            raise MalformedInputError(f"{path}: not a GADM mask file")
        (count,) = struct.unpack("<I", header[4:])
        cells = np.fromfile(fh, dtype="<u4")
    if cells.size != 2 * count:
        raise ShapeError(f"{path}: header declares {count} cells, file holds {cells.size // 2}")
    return cells.reshape(count, 2).astype(np.int64)


# -- checkpoints and scores ---------------------------------------------------

def write_checkpoint(path, weights, biases) -> None:
    dims = [weights[0].shape[0]] + [w.shape[1] for w in weights]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<I", len(weights)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for w, b in zip(weights, biases):
            np.ascontiguousarray(w, dtype="<f8").tofile(fh)
            np.ascontiguousarray(b, dtype="<f8").tofile(fh)


def read_checkpoint(path):
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8 or head[:4] != CHECKPOINT_MAGIC:
            raise MalformedInputError(f"{path}: not a GADW checkpoint")
        (layers,) = struct.unpack("<I", head[4:])
        dims = struct.unpack(f"<{layers + 1}I", fh.read(4 * (layers + 1)))
        params = np.fromfile(fh, dtype="<f8")
    weights, biases, pos = [], [], 0
    for a, b in zip(dims[:-1], dims[1:]):
        weights.append(params[pos:pos + a * b].reshape(a, b).copy())
        pos += a * b
        biases.append(params[pos:pos + b].copy())
        pos += b
    if pos != params.size:
        raise ShapeError(f"{path}: parameter payload does not match layer dims {dims}")
    return weights, biases


def write_scores(path, scores, node_ids=None) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.arange(len(scores)) if node_ids is None else np.asarray(node_ids)
    with open(path, "w") as fh:
        fh.write("".join(f"{i}\t{s!r}\n" for i, s in zip(ids.tolist(), scores.tolist())))


def read_scores(path):
    raw = np.loadtxt(path, dtype=np.float64, delimiter="\t", ndmin=2)
    return raw[:, 0].astype(np.int64), raw[:, 1]
