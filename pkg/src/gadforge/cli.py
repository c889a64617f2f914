"""Command-line entry point.

Exit codes: 0 ok, 2 usage, 3 data error, 4 budget exceeded, 5 internal error.
Errors are also written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from gadforge import io, pipeline
from gadforge.dataset import load_dataset, resolve
from gadforge.errors import BudgetExceeded, DataError
from gadforge.evaluate import (
    DETECTORS,
    Budgets,
    DetectorSpec,
    EvalReport,
    aggregate_reports,
    parse_bytes,
    run_benchmark,
    split_nodes,
)
from gadforge.missing import GRID_GAMMAS, IMPUTE_STRATEGIES
from gadforge.rng import DEFAULT_SEED

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET, EXIT_INTERNAL = 0, 2, 3, 4, 5

log = logging.getLogger("gadforge")


def _floats(text):
    """'0.1,0.2' or '0.1..0.5' (the five-point missing-ratio grid)."""
    if text in ("0.1..0.5", "0.10..0.50", "grid"):
        return list(GRID_GAMMAS)
    return [float(t) for t in text.split(",") if t]


def _names(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _emit(doc):
    print(json.dumps(doc, indent=2))


def cmd_ingest(a):
    m = pipeline.run_ingest(resolve(a.raw), a.out)
    _emit({"out": str(a.out), "n": m.parameters["n"], "num_edges": m.parameters["num_edges"]})


def cmd_make_seed(a):
    from gadforge.synthetic import make_seed_graph

    g, labels = make_seed_graph(a.n, a.d, a.anomaly_ratio, a.edges_per_node, seed=a.seed)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_edge_list(out / "edges.tsv", g.edge_array())
    io.write_features(out / "features.gadf", g.features)
    io.write_labels(out / "labels.tsv", labels.labels)
    raw = {"source_id": a.source_id, "edges": "edges.tsv", "features": "features.gadf",
           "labels": "labels.tsv", "n": g.n, "d": g.d, "seed": a.seed}
    (out / "raw.json").write_text(json.dumps(raw, indent=2) + "\n")
    _emit({"raw_manifest": str(out / "raw.json"), "n": g.n, "num_edges": g.num_edges})


def cmd_expand(a):
    m = pipeline.run_expand(resolve(a.input), a.out, a.target_n, a.seed, a.k_max, a.workers)
    _emit({"out": str(a.out), "validation": m.validation})
    return EXIT_OK if m.validation["passed"] else EXIT_DATA


def cmd_adjust(a):
    m = pipeline.run_adjust(resolve(a.input), a.out, a.target, a.strategy, a.seed, a.cluster_k)
    _emit({"out": str(a.out), **{k: m.parameters[k] for k in ("retained_count", "retained_checksum")}})


def cmd_inject(a):
    src = resolve(a.input)
    if a.strategies:
        strategies = _names(a.strategies)
        bad = [s for s in strategies if s not in IMPUTE_STRATEGIES]
        if bad:
            raise ValueError(f"unknown imputation strategies {bad}")
        cells = pipeline.run_missing_grid(src, a.out, a.gammas, strategies, a.seed, a.gamma1)
        _emit({"cells": [str(c) for c in cells]})
        return
    if len(a.gammas) != 1:
        raise ValueError("several gammas need --strategies (grid mode)")
    m = pipeline.run_inject(src, a.out, a.gammas[0], a.gamma1, a.seed)
    _emit({"out": str(a.out), **{k: m.parameters[k] for k in ("realized_gamma0", "realized_gamma1")}})


def cmd_impute(a):
    pipeline.run_impute(resolve(a.input), a.out, a.strategy)
    _emit({"out": str(a.out), "strategy": a.strategy})


def _load_for_scoring(path):
    ds = load_dataset(path)
    if not pipeline.features_are_finite(ds):
        raise DataError(f"{path} has missing feature values; impute before scoring")
    return ds


def _detector(a):
    params = json.loads(a.params) if a.params else {}
    return DetectorSpec(a.detector, params)


def cmd_score(a):
    from gadforge import detectors as det

    ds = _load_for_scoring(resolve(a.input))
    split = split_nodes(ds.graph.n, ds.labels, a.fractions, True, a.seed)
    spec = _detector(a)
    if spec.detector_id == "mlpae":
        cfg = det.MlpaeConfig(**{"seed": a.seed, **spec.params})
        model = det.train_mlpae(ds.graph.features, split.train_ids, split.val_ids, cfg)
        if a.checkpoint:
            model.save(a.checkpoint)
        scores = det.score_mlpae(model, ds.graph.features)
    elif spec.detector_id == "knn":
        scores = det.score_knn(ds.graph.features, split.train_ids, int(spec.params.get("k", 10)))
    else:
        scores = det.score_degree(ds.graph)
    io.write_scores(a.out, scores.scores)
    _emit({"out": str(a.out), "detector": spec.detector_id, "n": len(scores)})


def cmd_evaluate(a):
    path = resolve(a.input)
    ds = _load_for_scoring(path)
    split = split_nodes(ds.graph.n, ds.labels, a.fractions, True, a.seed)
    budget = parse_bytes(a.mem_budget) if a.mem_budget else None
    report = run_benchmark(ds.graph, ds.labels, _detector(a), split, Budgets(budget),
                           manifest_ref=str(Path(path).resolve()))
    if a.out:
        report.save(a.out)
    _emit(report.to_dict())
    if report.status == "oom_budget_exceeded":
        return EXIT_BUDGET
    if report.status == "error":
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_report(a):
    reports = [EvalReport.load(p) for p in a.reports]
    names = _names(a.names) if a.names else None
    if names is not None and len(names) != len(reports):
        raise ValueError("--names needs one label per report")
    paths = aggregate_reports(reports, a.out, names)
    _emit({"tables": [str(p) for p in paths]})


def cmd_validate(a):
    path = resolve(a.input)
    doc = {}
    if a.original or load_dataset(path).manifest.transform == "expand":
        doc["validation"] = pipeline.validate_variant(path, a.original)
    elif not a.replay:
        raise ValueError(f"{path} is not an expanded variant; pass --original or --replay")
    if a.replay:
        doc["replay"] = pipeline.replay(path)
    _emit(doc)
    ok = doc.get("validation", {"passed": True})["passed"] and doc.get("replay", {"identical": True})["identical"]
    return EXIT_OK if ok else EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gadforge", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("ingest", cmd_ingest, "clean a raw dataset described by a JSON manifest")
    sp.add_argument("--raw", required=True, help="raw dataset manifest (JSON)")
    sp.add_argument("--out", required=True)

    sp = add("make-seed", cmd_make_seed, "write a synthetic raw dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--d", type=int, default=16)
    sp.add_argument("--anomaly-ratio", type=float, default=0.05)
    sp.add_argument("--edges-per-node", type=float, default=10.0)
    sp.add_argument("--source-id", default="synthetic")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)

    sp = add("expand", cmd_expand, "scale-expand a dataset")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--target-n", type=int, required=True)
    sp.add_argument("--k-max", type=int, default=5, help="largest GMM component count tried")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)

    sp = add("adjust-ratio", cmd_adjust, "lower the anomaly ratio")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--target", type=float, required=True)
    sp.add_argument("--strategy", choices=["core", "edge", "random", "core_cluster", "edge_cluster"], default="core")
    sp.add_argument("--cluster-k", type=int, default=5)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)

    sp = add("inject-missing", cmd_inject, "mask attribute cells (optionally impute a grid)")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--gamma", dest="gammas", type=lambda t: [float(t)])
    g.add_argument("--gammas", dest="gammas", type=_floats, help="comma list or 0.1..0.5")
    sp.add_argument("--gamma1", type=float, default=None, help="anomaly-category ratio override")
    sp.add_argument("--strategies", default=None, help="comma list of mean,median,neighbor")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)

    sp = add("impute", cmd_impute, "fill a masked variant")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--strategy", choices=IMPUTE_STRATEGIES, required=True)

    for name, func, help_ in (("score", cmd_score, "write per-node anomaly scores"),
                              ("evaluate", cmd_evaluate, "run the benchmark protocol")):
        sp = add(name, func, help_)
        sp.add_argument("--in", dest="input", required=True)
        sp.add_argument("--detector", choices=DETECTORS, required=True)
        sp.add_argument("--params", default=None, help="detector parameters as JSON")
        sp.add_argument("--fractions", type=_floats, default=[0.7, 0.1, 0.2])
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        if name == "score":
            sp.add_argument("--out", required=True)
            sp.add_argument("--checkpoint", default=None)
        else:
            sp.add_argument("--out", default=None)
            sp.add_argument("--mem-budget", default=None, help="e.g. 8GB, 1MB")

    sp = add("report", cmd_report, "aggregate EvalReports into CSV tables")
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--out", required=True)
    sp.add_argument("--names", default=None, help="comma list of dataset column labels")

    sp = add("validate", cmd_validate, "re-run expansion checks on a variant")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--original", default=None)
    sp.add_argument("--replay", action="store_true", help="also regenerate from the manifest")
    return p


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except DataError as exc:
        return _fail(EXIT_DATA, exc)
    except BudgetExceeded as exc:
        return _fail(EXIT_BUDGET, exc)
    except (ValueError, FileNotFoundError) as exc:
        return _fail(EXIT_USAGE, exc)
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        return _fail(EXIT_INTERNAL, exc)
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
