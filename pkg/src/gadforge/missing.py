"""Category-conditioned missingness masks and the mean/median/neighbour fills."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from gadforge.errors import DegenerateColumnError
from gadforge.graph import AttributedGraph
from gadforge.rng import stream

IMPUTE_STRATEGIES = ("mean", "median", "neighbor")
GRID_GAMMAS = (0.10, 0.20, 0.30, 0.40, 0.50)
_COLUMN_BLOCK = 64
_ROW_BLOCK = 8192


@dataclass
class MissingMask:
    """Masked cells as ``(node, dimension)`` rows sorted lexicographically."""

    cells: np.ndarray
    gamma0: float
    gamma1: float
    n: int
    d: int

    def dense(self) -> np.ndarray:
        m = np.zeros((self.n, self.d), dtype=bool)
        m[self.cells[:, 0], self.cells[:, 1]] = True
        return m

    def __len__(self):
        return len(self.cells)


def _exact_count(gamma: float, total: int) -> int:
    return int(np.floor(gamma * total + 0.5))


def generate_mask(labels, gamma0: float, gamma1: float, d: int, seed: int = 20) -> MissingMask:
    """Mask exactly ``round(gamma_c * |V_c| * d)`` cells of each category, uniformly
    without replacement among that category's cells."""
    labels = np.asarray(getattr(labels, "labels", labels))
    for g in (gamma0, gamma1):
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"missing ratio must lie in [0, 1], got {g}")
    parts = []
    realized = []
    for c, gamma in ((0, gamma0), (1, gamma1)):
        ids = np.flatnonzero(labels == c)
        total = len(ids) * d
        k = _exact_count(gamma, total)
        flat = stream(seed, "mask", c).choice(total, size=k, replace=False) if k else np.zeros(0, dtype=np.int64)
        parts.append(np.column_stack([ids[flat // d], flat % d]))
        realized.append(k / total if total else 0.0)
    cells = np.concatenate(parts).astype(np.int64)
    cells = cells[np.lexsort((cells[:, 1], cells[:, 0]))]
    return MissingMask(cells, realized[0], realized[1], len(labels), d)


def realized_ratios(mask_cells, labels, d: int):
    """Masked-cell share of each category, ``(gamma0, gamma1)``."""
    labels = np.asarray(getattr(labels, "labels", labels))
    cat = labels[np.asarray(mask_cells)[:, 0]] if len(mask_cells) else np.zeros(0, dtype=labels.dtype)
    out = []
    for c in (0, 1):
        total = int((labels == c).sum()) * d
        out.append(int((cat == c).sum()) / total if total else 0.0)
    return tuple(out)


def apply_mask(features, mask_cells) -> np.ndarray:
    """Copy of ``features`` with masked cells set to NaN."""
    out = np.array(features, dtype=np.float32, copy=True)
    cells = np.asarray(mask_cells)
    if len(cells):
        out[cells[:, 0], cells[:, 1]] = np.nan
    return out


def _category_stats(X, M, rows, stat):
    """Per-dimension mean or median of observed cells among ``rows``; NaN where none observed."""
    d = X.shape[1]
    out = np.full(d, np.nan)
    for s in range(0, d, _COLUMN_BLOCK):
        block = X[rows, s:s + _COLUMN_BLOCK].astype(np.float64)
        block[M[rows, s:s + _COLUMN_BLOCK]] = np.nan
        observed = (~np.isnan(block)).any(axis=0)
        if not observed.any():
            continue
        sub = block[:, observed]
        vals = sub.mean(axis=0, where=~np.isnan(sub)) if stat == "mean" else np.nanmedian(sub, axis=0)
        out[s:s + _COLUMN_BLOCK][observed] = vals
    return out


def _fill_from_stats(out, M, rows, stats, category):
    if len(rows) == 0:
        return
    sub = M[rows]
    need = sub.any(axis=0)
    bad = np.flatnonzero(need & np.isnan(stats))
    if len(bad):
        raise DegenerateColumnError(int(bad[0]), category)
    r, c = np.nonzero(sub)
    out[rows[r], c] = stats[c]


def impute(features, mask, labels, g: AttributedGraph | None = None, strategy: str = "mean") -> np.ndarray:
    """Fill masked cells; unmasked cells are returned bit-identical.

    mean/median use the observed values of the node's own category in that
    dimension. neighbor averages the observed values of same-category neighbours
    and falls back to the category mean when none is observed.
    """
    if strategy not in IMPUTE_STRATEGIES:
        raise ValueError(f"unknown imputation strategy {strategy!r}")
    X = np.asarray(features, dtype=np.float32)
    labels = np.asarray(getattr(labels, "labels", labels))
    n, d = X.shape
    cells = mask.cells if isinstance(mask, MissingMask) else np.asarray(mask, dtype=np.int64).reshape(-1, 2)
    if len(cells) and (cells[:, 0].max() >= n or cells[:, 1].max() >= d or cells.min() < 0):
        raise ValueError("mask cell outside the feature matrix")
    M = np.zeros((n, d), dtype=bool)
    if len(cells):
        M[cells[:, 0], cells[:, 1]] = True
    out = np.array(X, copy=True)
    if not M.any():
        return out
    groups = [np.flatnonzero(labels == c) for c in (0, 1)]

    if strategy in ("mean", "median"):
        for c, rows in enumerate(groups):
            if M[rows].any():
                _fill_from_stats(out, M, rows, _category_stats(X, M, rows, strategy), c)
        return out

    if g is None:
        raise ValueError("neighbor imputation needs the graph")
    src = g.row_of_entries()
    dst = g.col_indices
    same = labels[src] == labels[dst]
    A = sp.csr_matrix((np.ones(int(same.sum())), (src[same], dst[same])), shape=(n, n))
    observed = (~M).astype(np.float64)
    values = np.where(M, 0.0, X.astype(np.float64))
    means = [None, None]
    for start in range(0, n, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, n)
        block_mask = M[start:stop]
        if not block_mask.any():
            continue
        A_blk = A[start:stop]
        sums = A_blk @ values
        cnt = A_blk @ observed
        r, c = np.nonzero(block_mask)
        has = cnt[r, c] > 0
        out[start + r[has], c[has]] = sums[r[has], c[has]] / cnt[r[has], c[has]]
        r, c = r[~has], c[~has]
        if len(r):
            cat = labels[start + r]
            for k in (0, 1):
                sel = cat == k
                if not sel.any():
                    continue
                if means[k] is None:
                    means[k] = _category_stats(X, M, groups[k], "mean")
                vals = means[k][c[sel]]
                if np.isnan(vals).any():
                    raise DegenerateColumnError(int(c[sel][np.isnan(vals)][0]), k)
                out[start + r[sel], c[sel]] = vals
    return out
