import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gadforge.rng import stream
from gadforge.stats import (
    fit_gmm,
    gmm_log_likelihood,
    kmeans,
    ks_matrix,
    ks_pvalue,
    ks_two_sample,
    sample_gmm,
)


def brute_d(a, b):
    best = 0.0
    for x in list(a) + list(b):
        fa = sum(1 for v in a if v <= x) / len(a)
        fb = sum(1 for v in b if v <= x) / len(b)
        best = max(best, abs(fa - fb))
    return best


def kolmogorov_series(x):
    """Survival function of the Kolmogorov distribution via its alternating series."""
    if x <= 0:
        return 1.0
    if x < 0.2:
        return 1.0  # the series converges slowly here; the true value is 1 to double precision
    return min(1.0, 2 * sum((-1) ** (j - 1) * math.exp(-2 * j * j * x * x) for j in range(1, 200)))


samples = st.lists(st.integers(-5, 5).map(float) | st.floats(-3, 3, allow_nan=False), min_size=1, max_size=50)


@settings(max_examples=300, deadline=None)
@given(samples, samples)
def test_ks_statistic_matches_brute_force(a, b):
    r = ks_two_sample(a, b)
    assert abs(r.statistic - brute_d(a, b)) <= 1e-12
    ne = len(a) * len(b) / (len(a) + len(b))
    assert r.p_value == pytest.approx(kolmogorov_series(math.sqrt(ne) * r.statistic), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(samples, samples)
def test_ks_symmetric(a, b):
    assert ks_two_sample(a, b) == ks_two_sample(b, a)


def test_ks_worked_example():
    assert ks_two_sample([1, 2, 3], [1.5, 2.5, 3.5]).statistic == pytest.approx(1 / 3, abs=1e-12)


def test_ks_identical_samples():
    r = ks_two_sample([1, 2, 3], [1, 2, 3])
    assert r.statistic == 0 and r.p_value == 1.0


def test_ks_empty_sample():
    with pytest.raises(ValueError):
        ks_two_sample([], [1.0])


def test_ks_null_calibration():
    rejections = 0
    for t in range(2000):
        rng = stream(20, "test/ks-null", t)
        rejections += ks_two_sample(rng.random(200), rng.random(200)).p_value < 0.05
    assert 0.03 <= rejections / 2000 <= 0.07


def test_ks_matrix_shifted_column():
    rng = np.random.default_rng(1)
    A = rng.random((500, 5))
    B = rng.random((500, 5))
    B[:, 2] += 10
    rep = ks_matrix(A, B)
    assert rep.per_dimension[2].p_value < 1e-10
    others = [ks_two_sample(A[:, j], B[:, j]).p_value for j in (0, 1, 3, 4)]
    assert rep.median_p == pytest.approx(float(np.median(others + [rep.per_dimension[2].p_value])))
    with pytest.raises(ValueError):
        ks_matrix(A, B[:, :4])


def brute_two_means(x):
    best = None
    n = len(x)
    for mask in itertools.product([0, 1], repeat=n):
        if 0 < sum(mask) < n:
            g0 = [v for v, m in zip(x, mask) if not m]
            g1 = [v for v, m in zip(x, mask) if m]
            c0, c1 = np.mean(g0), np.mean(g1)
            cost = sum((v - c0) ** 2 for v in g0) + sum((v - c1) ** 2 for v in g1)
            if best is None or cost < best[0]:
                best = (cost, sorted([c0, c1]))
    return best[1]


def test_kmeans_matches_partition_oracle():
    x = [0, 0.1, 10, 10.1]
    res = kmeans(np.array(x)[:, None], 2)
    assert sorted(res.centroids[:, 0]) == pytest.approx(brute_two_means(x), abs=1e-12)
    assert sorted(res.centroids[:, 0]) == pytest.approx([0.05, 10.05])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_kmeans_invariants(seed, K):
    X = np.random.default_rng(seed).normal(size=(40, 3))
    res = kmeans(X, K, seed=seed)
    assert res.sizes.sum() == 40
    for k in range(K):
        if res.sizes[k]:
            assert np.allclose(res.centroids[k], X[res.assignment == k].mean(0))
    assert all(b <= a + 1e-9 for a, b in zip(res.inertia_trace, res.inertia_trace[1:]))


def test_kmeans_argument_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 1)), 4)


def test_gmm_single_component_closed_form():
    X = np.random.default_rng(2).normal(3, 2, size=(1000, 2))
    m = fit_gmm(X, k_candidates=(1,))
    assert np.allclose(m.means[0], X.mean(0))
    assert np.allclose(m.variances[0], X.var(0))


def _two_blobs(seed, m=50_000):
    rng = stream(seed, "test/gmm")
    comp = rng.integers(0, 2, size=m)
    X = rng.standard_normal((m, 2)) + 10.0 * comp[:, None]
    return X, comp


def test_gmm_recovers_two_components():
    X, comp = _two_blobs(20)
    m = fit_gmm(X, k_candidates=(2,))
    oracle = sorted(X[comp == c].mean(0).tolist() for c in (0, 1))
    got = sorted(m.means.tolist())
    assert np.abs(np.array(got) - np.array(oracle)).max() < 0.05
    assert np.abs(np.array(got) - np.array([[0, 0], [10, 10]])).max() < 0.05


def test_gmm_bic_prefers_two():
    X, _ = _two_blobs(21, 5000)
    assert fit_gmm(X).K == 2


def test_gmm_sample_refit_round_trip():
    X, _ = _two_blobs(22)
    model = fit_gmm(X, k_candidates=(2,))
    Y = sample_gmm(model, 50_000, stream(22, "test/resample"))
    refit = fit_gmm(Y, k_candidates=(2,))
    assert np.abs(np.array(sorted(refit.means.tolist())) - np.array(sorted(model.means.tolist()))).max() < 0.05


def test_em_monotone_across_seeds():
    # the fit itself raises on any decrease; assert the recorded traces as well
    for s in range(100):
        rng = stream(s, "test/em")
        X = np.concatenate([rng.normal(0, 1, (150, 3)), rng.normal(3, 0.5, (100, 3))])
        m = fit_gmm(X, k_candidates=(1, 2, 3), seed=s)
        t = m.loglik_trace
        assert all(b >= a - 1e-9 * abs(a) for a, b in zip(t, t[1:]))
        assert m.log_likelihood == pytest.approx(gmm_log_likelihood(X, m))


def test_gmm_argument_errors():
    with pytest.raises(ValueError):
        fit_gmm(np.zeros((2, 1)), k_candidates=(3, 4))
