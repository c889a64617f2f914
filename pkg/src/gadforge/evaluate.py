"""Evaluation protocol: node splits, ranking metrics, resource accounting."""

from __future__ import annotations

import csv
import json
import logging
import threading
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import psutil
from scipy.stats import rankdata

from gadforge.errors import BudgetExceeded
from gadforge.graph import AttributedGraph, NodeLabels
from gadforge.rng import DEFAULT_SEED, stream

log = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.7, 0.1, 0.2)
SAMPLE_INTERVAL = 0.1
RECALL_CONVENTION = "recall@k with k = number of positives in the evaluation set; ties broken by ascending node id"


# -- splits ----------------------------------------------------------------------

@dataclass
class SplitSpec:
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    fractions: tuple = DEFAULT_FRACTIONS
    stratified: bool = True
    seed: int = DEFAULT_SEED


def _check_fractions(fractions):
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be three positive numbers summing to 1, got {fractions}")
    return fractions


def split_nodes(n: int, labels=None, fractions=DEFAULT_FRACTIONS, stratified=True, seed=DEFAULT_SEED) -> SplitSpec:
    """Disjoint train/val/test ids covering ``0..n-1``.

    Stratified splits divide each class separately, so every split keeps the
    anomaly ratio up to rounding.
    """
    fractions = _check_fractions(fractions)
    lab = np.zeros(n, dtype=np.uint8) if labels is None else np.asarray(getattr(labels, "labels", labels))
    groups = [np.flatnonzero(lab == c) for c in (0, 1)] if stratified else [np.arange(n)]
    parts = ([], [], [])
    for c, ids in enumerate(groups):
        perm = ids[stream(seed, "split", c).permutation(len(ids))]
        n_train = int(np.floor(fractions[0] * len(ids) + 0.5))
        n_val = int(np.floor(fractions[1] * len(ids) + 0.5))
        n_val = min(n_val, len(ids) - n_train)
        parts[0].append(perm[:n_train])
        parts[1].append(perm[n_train:n_train + n_val])
        parts[2].append(perm[n_train + n_val:])
    train, val, test = (np.sort(np.concatenate(p)).astype(np.int64) for p in parts)
    return SplitSpec(train, val, test, fractions, stratified, seed)


# -- metrics ---------------------------------------------------------------------

def _prep(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    return s, y


def auc_roc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    s, y = _prep(scores, labels)
    pos = int(y.sum())
    neg = len(y) - pos
    if pos == 0 or neg == 0:
        raise ValueError("AUC-ROC needs both positive and negative labels")
    ranks = rankdata(s, method="average")
    return float((ranks[y == 1].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


def auc_pr(scores, labels) -> float:
    """Average precision; tied scores are one cut point."""
    s, y = _prep(scores, labels)
    pos = int(y.sum())
    if pos == 0:
        raise ValueError("AUC-PR needs at least one positive label")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp_at = tp[ends]
    precision = tp_at / (ends + 1)
    recall_gain = np.diff(np.r_[0, tp_at]) / pos
    return float((precision * recall_gain).sum())


def recall_at_k(scores, labels, k=None, node_ids=None) -> float:
    """Share of positives found in the top ``k`` scores (default ``k`` = positive count)."""
    s, y = _prep(scores, labels)
    pos = int(y.sum())
    if pos == 0:
        raise ValueError("recall needs at least one positive label")
    k = pos if k is None else int(k)
    if not 1 <= k <= len(s):
        raise ValueError(f"k must lie in 1..{len(s)}, got {k}")
    ids = np.arange(len(s)) if node_ids is None else np.asarray(node_ids)
    top = np.lexsort((ids, -s))[:k]
    return float(y[top].sum() / pos)


# -- resource accounting ---------------------------------------------------------------

def _tree_rss(proc: psutil.Process) -> int:
    total = proc.memory_info().rss
    for child in proc.children(recursive=True):
        try:
            total += child.memory_info().rss
        except psutil.Error:
            pass
    return total


class ResourceMonitor:
    """Samples resident memory of this process tree every 100 ms on a daemon thread.

    The benchmarked code calls ``check()`` at safe points; it raises
    ``BudgetExceeded`` once any sample has passed the budget.
    """

    def __init__(self, budget_bytes=None, interval=SAMPLE_INTERVAL):
        self.budget = budget_bytes
        self.interval = interval
        self.peak = 0
        self._proc = psutil.Process()
        self._stop = threading.Event()
        self._thread = None

    def sample(self) -> int:
        rss = _tree_rss(self._proc)
        self.peak = max(self.peak, rss)
        return rss

    @property
    def exceeded(self) -> bool:
        return self.budget is not None and self.peak > self.budget

    def check(self) -> None:
        if self.exceeded:
            raise BudgetExceeded(self.peak, self.budget)

    def _run(self):
        while not self._stop.wait(self.interval):
            self.sample()

    def __enter__(self):
        self.sample()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()
        self.sample()
        return False


def parse_bytes(text) -> int:
    """'8GB', '512MB', '1 MiB', '1024' -> bytes (decimal for KB/MB/GB, binary for KiB/MiB/GiB)."""
    if isinstance(text, (int, float)):
        return int(text)
    t = str(text).strip().upper().replace(" ", "")
    units = {"KIB": 1 << 10, "MIB": 1 << 20, "GIB": 1 << 30, "TIB": 1 << 40,
             "KB": 10 ** 3, "MB": 10 ** 6, "GB": 10 ** 9, "TB": 10 ** 12, "B": 1}
    for suffix, mult in units.items():
        if t.endswith(suffix):
            return int(float(t[: -len(suffix)]) * mult)
    return int(float(t))


# -- benchmark runs -----------------------------------------------------------------------

@dataclass
class DetectorSpec:
    detector_id: str
    params: dict = field(default_factory=dict)


@dataclass
class Budgets:
    memory_bytes: int | None = None


@dataclass
class EvalReport:
    detector_id: str
    dataset_manifest_ref: str | None
    status: str
    runtime_seconds: float
    peak_memory_bytes: int
    auc_roc: float | None = None
    auc_pr: float | None = None
    recall_at_k: float | None = None
    k_used: int | None = None
    message: str | None = None
    memory_measure: str = "process-tree peak resident set size (not GPU memory)"
    recall_convention: str = RECALL_CONVENTION

    def metrics(self):
        return (self.auc_roc, self.auc_pr, self.recall_at_k)

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls(**json.loads(Path(path).read_text()))


def _score(graph, labels, detector: DetectorSpec, split: SplitSpec, check):
    from gadforge import detectors as det

    p = dict(detector.params)
    did = detector.detector_id
    if did == "mlpae":
        cfg = det.MlpaeConfig(**{"seed": split.seed, **p})
        model = det.train_mlpae(graph.features, split.train_ids, split.val_ids, cfg, check=check)
        return det.score_mlpae(model, graph.features, check=check)
    if did == "knn":
        return det.score_knn(graph.features, split.train_ids, k=int(p.get("k", 10)), check=check)
    if did == "degree":
        check()
        return det.score_degree(graph)
    raise ValueError(f"unknown detector {did!r}")


DETECTORS = ("mlpae", "knn", "degree")


def run_benchmark(
    graph: AttributedGraph,
    labels: NodeLabels,
    detector: DetectorSpec | str,
    split: SplitSpec,
    budgets: Budgets | None = None,
    manifest_ref: str | None = None,
) -> EvalReport:
    """Train on the train split, early-stop on val, score, and evaluate on the test split only."""
    if isinstance(detector, str):
        detector = DetectorSpec(detector)
    budgets = budgets or Budgets()
    monitor = ResourceMonitor(budgets.memory_bytes)
    status, message, scores = "ok", None, None
    start = time.perf_counter()
    with monitor:
        try:
            monitor.check()
            scores = _score(graph, labels, detector, split, monitor.check)
            monitor.sample()
            monitor.check()
        except BudgetExceeded as exc:
            status, message = "oom_budget_exceeded", str(exc)
        except MemoryError as exc:
            status, message = "oom_budget_exceeded", f"MemoryError: {exc}"
        except Exception as exc:  # detector failure is reported, not raised
            status, message = "error", f"{type(exc).__name__}: {exc}"
            log.debug("detector failure\n%s", traceback.format_exc())
    runtime = time.perf_counter() - start
    report = EvalReport(
        detector_id=detector.detector_id,
        dataset_manifest_ref=manifest_ref,
        status=status,
        runtime_seconds=runtime,
        peak_memory_bytes=int(monitor.peak),
        message=message,
    )
    if status == "ok":
        test = split.test_ids
        y = labels.labels[test]
        s = scores.scores[test]
        report.auc_roc = auc_roc(s, y)
        report.auc_pr = auc_pr(s, y)
        report.k_used = int(y.sum())
        report.recall_at_k = recall_at_k(s, y, node_ids=test)
    return report


# -- aggregation ---------------------------------------------------------------------------

REPORT_FIELDS = ("auc_roc", "auc_pr", "recall_at_k", "runtime_seconds", "peak_memory_bytes")


def aggregate_reports(reports, out_dir, dataset_names=None):
    """Write one CSV per field: rows = detectors, columns = datasets, cells = value or OOM/ERROR.

    ``dataset_names`` maps each report to its column label; defaults to the
    manifest reference. Returns the written paths.
    """
    reports = list(reports)
    names = list(dataset_names) if dataset_names is not None else [r.dataset_manifest_ref or "?" for r in reports]
    datasets = list(dict.fromkeys(names))
    detectors = list(dict.fromkeys(r.detector_id for r in reports))
    cells = {(r.detector_id, name): r for r, name in zip(reports, names)}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for fld in REPORT_FIELDS:
        path = out_dir / f"{fld}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["detector", *datasets])
            for det in detectors:
                row = [det]
                for ds in datasets:
                    r = cells.get((det, ds))
                    if r is None:
                        row.append("")
                    elif r.status == "oom_budget_exceeded":
                        row.append("OOM")
                    elif r.status == "error":
                        row.append("ERROR")
                    else:
                        row.append(getattr(r, fld))
                w.writerow(row)
        paths.append(path)
    return paths
