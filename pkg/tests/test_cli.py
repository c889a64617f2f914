import json

import numpy as np
import pytest

from gadforge import io
from gadforge.cli import main
from gadforge.dataset import load_dataset
from gadforge.missing import GRID_GAMMAS, IMPUTE_STRATEGIES


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    assert main(["make-seed", "--out", str(root / "raw"), "--n", "400", "--d", "6"]) == 0
    assert main(["ingest", "--raw", str(root / "raw" / "raw.json"), "--out", str(root / "base")]) == 0
    return root


def run(*args):
    return main([str(a) for a in args])


def test_ingest_output(workspace):
    ds = load_dataset(workspace / "base")
    assert ds.graph.n == 400 and ds.manifest.transform == "ingest"
    assert (workspace / "base" / "id_map.tsv").exists()


def test_expand_and_validate(workspace, capsys):
    assert run("expand", "--in", workspace / "base", "--out", workspace / "big", "--target-n", 2000) == 0
    capsys.readouterr()
    assert run("validate", "--in", workspace / "big", "--replay") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["replay"]["identical"] and doc["validation"]["passed"]


def test_adjust_inject_impute_evaluate(workspace, capsys):
    base = workspace / "base"
    assert run("adjust-ratio", "--in", base, "--out", workspace / "adj", "--target", 0.01) == 0
    assert load_dataset(workspace / "adj").labels.anomaly_count == 4
    assert run("inject-missing", "--in", base, "--out", workspace / "m", "--gamma", 0.2) == 0
    masked = load_dataset(workspace / "m")
    assert np.isnan(masked.graph.features).sum() == len(masked.mask)
    # scoring a masked variant is a data error
    assert run("evaluate", "--in", workspace / "m", "--detector", "knn") == 3
    assert run("impute", "--in", workspace / "m", "--out", workspace / "mi", "--strategy", "neighbor") == 0
    assert run("evaluate", "--in", workspace / "mi", "--detector", "knn", "--out", workspace / "r.json") == 0
    assert _status(workspace / "r.json") == "ok"
    assert run("evaluate", "--in", base, "--detector", "degree", "--mem-budget", "1MB", "--out", workspace / "o.json") == 4
    assert run("report", workspace / "r.json", workspace / "o.json", "--names", "mi,base", "--out", workspace / "t") == 0
    assert (workspace / "t" / "auc_roc.csv").read_text().splitlines()[1:] == [f"knn,{json.loads((workspace / 'r.json').read_text())['auc_roc']},", "degree,,OOM"]
    assert run("score", "--in", base, "--detector", "mlpae", "--params", '{"epochs": 2}',
               "--out", workspace / "s.tsv", "--checkpoint", workspace / "m.gadw") == 0
    ids, scores = io.read_scores(workspace / "s.tsv")
    assert len(scores) == 400 and (workspace / "m.gadw").exists()


def _status(path):
    return json.loads(path.read_text())["status"]


def test_missing_grid_layout(workspace):
    assert run("inject-missing", "--in", workspace / "base", "--out", workspace / "grid",
               "--gammas", "0.1..0.5", "--strategies", ",".join(IMPUTE_STRATEGIES)) == 0
    for g in GRID_GAMMAS:
        for s in IMPUTE_STRATEGIES:
            ds = load_dataset(workspace / "grid" / f"g{g:.2f}-{s}")
            assert np.isfinite(ds.graph.features).all()
            assert ds.manifest.parameters["strategy"] == s


def test_relative_paths_use_data_root(workspace, monkeypatch):
    monkeypatch.setenv("GADFORGE_DATA_ROOT", str(workspace))
    assert run("validate", "--in", "base", "--replay") == 0


def test_exit_codes(workspace, tmp_path):
    assert run("bogus") == 2
    assert run("expand", "--in", tmp_path / "nope", "--out", tmp_path / "x", "--target-n", 5) == 2
    assert run("expand", "--in", workspace / "base", "--out", tmp_path / "x", "--target-n", 5) == 2
    assert run("adjust-ratio", "--in", workspace / "base", "--out", tmp_path / "y", "--target", 0.5) == 2


def test_tampered_variant_is_data_error(workspace, tmp_path):
    import shutil

    shutil.copytree(workspace / "base", tmp_path / "b")
    with open(tmp_path / "b" / "labels.tsv", "a") as fh:
        fh.write("# edited\n")
    assert run("evaluate", "--in", tmp_path / "b", "--detector", "degree") == 3
