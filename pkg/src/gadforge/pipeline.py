"""Manifest-driven transforms over dataset directories.

Each ``run_*`` reads an input (dataset directory or raw manifest), writes a
variant directory, and records everything needed to regenerate it in the
variant's manifest. ``replay`` re-executes a manifest and reports whether the
regenerated files match the recorded checksums.
"""

from __future__ import annotations

import json
import logging
import tempfile
from pathlib import Path

import numpy as np

from gadforge import io
from gadforge.dataset import (
    ID_MAP,
    MANIFEST,
    Dataset,
    load_dataset,
    parent_record,
    save_dataset,
)
from gadforge.expand import expand_graph, validate_expansion
from gadforge.graph import VariantManifest
from gadforge.ingest import parse_dataset, preprocess, write_id_map
from gadforge.missing import apply_mask, generate_mask, impute, realized_ratios
from gadforge.ratio import RetentionStrategy, adjust_ratio
from gadforge.rng import DEFAULT_SEED

log = logging.getLogger(__name__)


def _child_manifest(parent: Dataset, transform, parameters, seed, in_path):
    return VariantManifest(
        source_id=parent.manifest.source_id,
        transform=transform,
        parameters=parameters,
        seed=seed,
        parent=parent_record(in_path),
    )


def run_ingest(raw_manifest, out) -> VariantManifest:
    raw = parse_dataset(raw_manifest)
    g, labels, manifest, id_map = preprocess(raw)
    manifest.parent = parent_record(raw_manifest)
    return save_dataset(out, g, labels, manifest, extra_files={ID_MAP: lambda p: write_id_map(p, id_map)})


def run_expand(in_dir, out, target_n, seed=DEFAULT_SEED, k_max=5, workers=1) -> VariantManifest:
    ds = load_dataset(in_dir)
    result = expand_graph(ds.graph, ds.labels, int(target_n), seed=seed,
                          k_candidates=range(1, int(k_max) + 1), workers=workers)
    params = {
        "target_n": int(target_n),
        "k_max": int(k_max),
        "plan": result.plan.to_dict(),
        "gmm_normal": result.gmm_normal.to_dict() if result.gmm_normal else None,
        "gmm_anomaly": result.gmm_anomaly.to_dict() if result.gmm_anomaly else None,
        "num_edges": result.graph.num_edges,
    }
    manifest = _child_manifest(ds, "expand", params, seed, in_dir)
    manifest.validation = result.validation.to_dict()
    if not result.validation.passed:
        log.warning("expanded variant failed validation: %s", json.dumps(manifest.validation)[:500])
    return save_dataset(out, result.graph, result.labels, manifest)


def run_adjust(in_dir, out, target, strategy="core", seed=DEFAULT_SEED, cluster_k=5) -> VariantManifest:
    ds = load_dataset(in_dir)
    strat = RetentionStrategy(strategy, int(cluster_k))
    g, labels, adj = adjust_ratio(ds.graph, ds.labels, float(target), strat, seed)
    params = {
        "target_ratio": float(target),
        "strategy": strat.kind,
        "cluster_k": strat.cluster_k,
        "retained_count": int(len(adj.retained)),
        "demoted_count": int(len(adj.demoted)),
        "retained_checksum": adj.retained_checksum(),
        "cluster_sizes": [int(s) for s in adj.cluster_sizes],
    }
    return save_dataset(out, g, labels, _child_manifest(ds, "ratio_adjust", params, seed, in_dir))


def run_inject(in_dir, out, gamma0, gamma1=None, seed=DEFAULT_SEED) -> VariantManifest:
    """Masked variant: masked cells hold NaN and are listed in ``mask.gadm``."""
    ds = load_dataset(in_dir)
    gamma1 = gamma0 if gamma1 is None else gamma1
    mask = generate_mask(ds.labels, float(gamma0), float(gamma1), ds.graph.d, seed)
    g = ds.graph.with_features(apply_mask(ds.graph.features, mask.cells))
    params = {
        "gamma0": float(gamma0),
        "gamma1": float(gamma1),
        "realized_gamma0": mask.gamma0,
        "realized_gamma1": mask.gamma1,
        "masked_cells": len(mask),
    }
    return save_dataset(out, g, ds.labels, _child_manifest(ds, "inject_missing", params, seed, in_dir), mask=mask.cells)


def run_impute(in_dir, out, strategy) -> VariantManifest:
    ds = load_dataset(in_dir)
    if ds.mask is None:
        raise FileNotFoundError(f"{in_dir} has no mask file; run inject-missing first")
    filled = impute(ds.graph.features, ds.mask, ds.labels, ds.graph, strategy)
    params = {
        "strategy": strategy,
        "gamma0": ds.manifest.parameters.get("gamma0"),
        "gamma1": ds.manifest.parameters.get("gamma1"),
        "realized_ratios": list(realized_ratios(ds.mask, ds.labels, ds.graph.d)),
    }
    manifest = _child_manifest(ds, "impute", params, ds.manifest.seed, in_dir)
    return save_dataset(out, ds.graph.with_features(filled), ds.labels, manifest, mask=ds.mask)


def run_missing_grid(in_dir, out, gammas, strategies, seed=DEFAULT_SEED, gamma1=None):
    """Masked variant per gamma plus one imputed variant per (gamma, strategy).

    Returns the list of imputed variant directories.
    """
    out = Path(out)
    cells = []
    for gamma in gammas:
        tag = f"g{gamma:.2f}"
        masked = out / f"masked-{tag}"
        run_inject(in_dir, masked, gamma, gamma1, seed)
        for strategy in strategies:
            cell = out / f"{tag}-{strategy}"
            run_impute(masked, cell, strategy)
            cells.append(cell)
    return cells


def load_expansion_pair(expanded_dir, original_dir=None):
    exp = load_dataset(expanded_dir)
    if original_dir is None:
        if exp.manifest.transform != "expand" or not exp.manifest.parent:
            raise ValueError(f"{expanded_dir} is not an expanded variant; pass the original explicitly")
        original_dir = exp.manifest.parent["path"]
    return load_dataset(original_dir), exp


def validate_variant(expanded_dir, original_dir=None) -> dict:
    orig, exp = load_expansion_pair(expanded_dir, original_dir)
    return validate_expansion(orig.graph, exp.graph, orig.labels, exp.labels).to_dict()


def replay(variant_dir, out=None) -> dict:
    """Regenerate a variant from its manifest and compare file checksums."""
    variant_dir = Path(variant_dir)
    manifest = VariantManifest.load(variant_dir / MANIFEST)
    parent = manifest.parent or {}
    src = parent.get("path")
    if src is None or not Path(src).exists():
        raise FileNotFoundError(f"parent {src!r} recorded in {variant_dir / MANIFEST} is missing")
    if io.sha256_file(Path(src) / MANIFEST if Path(src).is_dir() else src) != parent.get("manifest_sha256"):
        raise ValueError(f"parent {src} changed since {variant_dir} was generated")
    p, seed = manifest.parameters, manifest.seed
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(out) if out else Path(tmp) / "replay"
        if manifest.transform == "ingest":
            regen = run_ingest(src, target)
        elif manifest.transform == "expand":
            regen = run_expand(src, target, p["target_n"], seed, p["k_max"])
        elif manifest.transform == "ratio_adjust":
            regen = run_adjust(src, target, p["target_ratio"], p["strategy"], seed, p["cluster_k"])
        elif manifest.transform == "inject_missing":
            regen = run_inject(src, target, p["gamma0"], p["gamma1"], seed)
        else:
            regen = run_impute(src, target, p["strategy"])
    mismatched = sorted(
        name for name in set(manifest.content_checksums) | set(regen.content_checksums)
        if manifest.content_checksums.get(name) != regen.content_checksums.get(name)
    )
    return {"identical": not mismatched, "mismatched": mismatched, "transform": manifest.transform}


def features_are_finite(ds: Dataset) -> bool:
    return bool(np.isfinite(ds.graph.features).all())
