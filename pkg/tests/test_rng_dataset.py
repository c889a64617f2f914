import numpy as np
import pytest

from gadforge.dataset import load_dataset, save_dataset
from gadforge.errors import ConsistencyError
from gadforge.graph import VariantManifest
from gadforge.rng import DEFAULT_SEED, stream


def test_streams_reproducible_and_distinct():
    assert DEFAULT_SEED == 20
    a = stream(20, "x", 3).random(5)
    assert np.array_equal(a, stream(20, "x", 3).random(5))
    assert not np.array_equal(a, stream(20, "x", 4).random(5))
    assert not np.array_equal(a, stream(20, "y", 3).random(5))
    assert not np.array_equal(a, stream(21, "x", 3).random(5))


def test_dataset_checksums(small_graph, tmp_path):
    g, labels = small_graph
    m = VariantManifest("toy", "ingest", {}, None)
    save_dataset(tmp_path / "d", g, labels, m, mask=np.array([[0, 1]]))
    ds = load_dataset(tmp_path / "d")
    assert ds.graph.features.tobytes() == g.features.tobytes()
    assert ds.mask.tolist() == [[0, 1]]
    (tmp_path / "d" / "edges.tsv").write_text("0\t1\n")
    with pytest.raises(ConsistencyError):
        load_dataset(tmp_path / "d")
