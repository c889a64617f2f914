"""Two-sample KS tests, diagonal Gaussian mixtures fitted by EM, and k-means."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov, logsumexp

from gadforge.rng import stream

VARIANCE_FLOOR = 1e-6
KS_ALPHA = 0.05


# -- Kolmogorov-Smirnov ------------------------------------------------------

@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float

    def to_dict(self):
        return {"statistic": self.statistic, "p_value": self.p_value}


@dataclass
class KsMatrixReport:
    per_dimension: list
    median_p: float
    pass_fraction: float
    passed: bool

    def to_dict(self):
        return {
            "median_p": self.median_p,
            "pass_fraction": self.pass_fraction,
            "passed": self.passed,
            "statistics": [r.statistic for r in self.per_dimension],
            "p_values": [r.p_value for r in self.per_dimension],
        }


def ks_statistic(a, b) -> float:
    """Supremum gap between the two empirical CDFs, evaluated at every sample point."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two non-empty samples")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("KS test needs finite samples")
    points = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, points, side="right") / a.size
    cdf_b = np.searchsorted(b, points, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_pvalue(statistic: float, n_a: int, n_b: int) -> float:
    """Asymptotic two-sided p-value with effective size ``n_a*n_b/(n_a+n_b)``."""
    ne = n_a * n_b / (n_a + n_b)
    return float(np.clip(kolmogorov(np.sqrt(ne) * statistic), 0.0, 1.0))


def ks_two_sample(a, b) -> KsResult:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    d = ks_statistic(a, b)
    return KsResult(d, ks_pvalue(d, a.size, b.size))


def ks_matrix(A, B) -> KsMatrixReport:
    """Column-wise KS between two matrices; passes when the median p-value exceeds 0.05."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    results = [ks_two_sample(A[:, j], B[:, j]) for j in range(A.shape[1])]
    p = np.array([r.p_value for r in results])
    median_p = float(np.median(p)) if p.size else 1.0
    return KsMatrixReport(
        per_dimension=results,
        median_p=median_p,
        pass_fraction=float(np.mean(p > KS_ALPHA)) if p.size else 1.0,
        passed=median_p > KS_ALPHA,
    )


# -- k-means -----------------------------------------------------------------

@dataclass
class ClusterAssignment:
    assignment: np.ndarray
    centroids: np.ndarray
    sizes: np.ndarray
    inertia: float
    inertia_trace: list = field(default_factory=list)


def _sq_dists(X, C):
    # ||x||^2 - 2 x.c + ||c||^2, clipped against round-off
    d2 = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d2, 0.0)


def kmeans_plusplus(X, K: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``K`` seed rows chosen by D^2 sampling."""
    m = X.shape[0]
    chosen = [int(rng.integers(m))]
    closest = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, K):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(m, p=closest / total))
        else:
            free = np.setdiff1d(np.arange(m), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(X, X[idx:idx + 1])[:, 0])
    return np.array(chosen)


def kmeans(X, K: int, seed: int = 20, max_iter: int = 100) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when assignments no longer change. An empty cluster is re-seeded with
    the point farthest from its current centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("kmeans expects a 2-d matrix")
    m = X.shape[0]
    if K < 1 or m < K:
        raise ValueError(f"kmeans needs 1 <= K <= m (K={K}, m={m})")
    rng = stream(seed, "kmeans")
    centroids = X[kmeans_plusplus(X, K, rng)].copy()
    assignment = None
    trace = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, centroids)
        new = d2.argmin(axis=1)
        sizes = np.bincount(new, minlength=K)
        for k in np.flatnonzero(sizes == 0):
            own = d2[np.arange(m), new]
            far = int(np.argmax(own))
            centroids[k] = X[far]
            d2[far] = _sq_dists(X[far:far + 1], centroids)[0]
            new[far] = k
            sizes = np.bincount(new, minlength=K)
        trace.append(float(d2[np.arange(m), new].sum()))
        if assignment is not None and np.array_equal(new, assignment):
            break
        assignment = new
        for k in range(K):
            centroids[k] = X[assignment == k].mean(axis=0)
    sizes = np.bincount(assignment, minlength=K)
    inertia = float(((X - centroids[assignment]) ** 2).sum())
    return ClusterAssignment(assignment, centroids, sizes, inertia, trace)


# -- Gaussian mixtures -------------------------------------------------------

@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float = float("nan")
    bic: float = float("nan")
    loglik_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def to_dict(self):
        return {
            "K": self.K,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_likelihood": self.log_likelihood,
            "bic": self.bic,
            "iterations": len(self.loglik_trace),
            "converged": self.converged,
        }


def _component_log_density(X, means, variances, weights):
    """``log w_k + log N(x | mu_k, diag(var_k))`` for every row and component."""
    m, d = X.shape
    K = len(weights)
    out = np.empty((m, K))
    for k in range(K):
        diff = X - means[k]
        out[:, k] = -0.5 * ((diff * diff) / variances[k]).sum(1)
        out[:, k] += np.log(weights[k]) - 0.5 * (d * np.log(2 * np.pi) + np.log(variances[k]).sum())
    return out


def gmm_log_likelihood(X, model: GmmModel) -> float:
    X = np.asarray(X, dtype=np.float64)
    return float(logsumexp(_component_log_density(X, model.means, model.variances, model.weights), axis=1).sum())


class EMMonotonicityError(AssertionError):
    pass


def _m_step(X, resp, floor, fallback_means):
    nk = resp.sum(0)
    K = resp.shape[1]
    m = X.shape[0]
    weights = np.maximum(nk, 10 * np.finfo(float).eps) / m
    weights /= weights.sum()
    means = np.empty((K, X.shape[1]))
    variances = np.empty_like(means)
    for k in range(K):
        if nk[k] <= 10 * np.finfo(float).eps:
            means[k] = fallback_means[k]
            variances[k] = np.maximum(X.var(0), floor)
            continue
        r = resp[:, k]
        means[k] = r @ X / nk[k]
        diff = X - means[k]
        variances[k] = np.maximum(r @ (diff * diff) / nk[k], floor)
    return weights, means, variances


def _fit_single(X, K, seed, tol, max_iter, floor):
    m, d = X.shape
    rng = stream(seed, "gmm-init", K)
    centers = X[kmeans_plusplus(X, K, rng)]
    hard = _sq_dists(X, centers).argmin(1)
    resp = np.zeros((m, K))
    resp[np.arange(m), hard] = 1.0
    weights, means, variances = _m_step(X, resp, floor, centers)
    trace = []
    converged = False
    for _ in range(max_iter):
        logp = _component_log_density(X, means, variances, weights)
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        if trace:
            prev = trace[-1]
            if ll < prev - 1e-9 * max(1.0, abs(prev)):
                raise EMMonotonicityError(f"EM log-likelihood decreased from {prev} to {ll} (K={K})")
            if (ll - prev) <= tol * abs(prev):
                trace.append(ll)
                converged = True
                break
        trace.append(ll)
        resp = np.exp(logp - norm[:, None])
        weights, means, variances = _m_step(X, resp, floor, means)
    else:
        # parameters were updated after the last evaluated log-likelihood
        trace.append(gmm_log_likelihood(X, GmmModel(weights, means, variances)))
    n_params = (K - 1) + 2 * K * d
    bic = -2.0 * trace[-1] + n_params * np.log(m)
    return GmmModel(weights, means, variances, trace[-1], float(bic), trace, converged)


def fit_gmm(
    X,
    k_candidates=(1, 2, 3, 4, 5),
    seed: int = 20,
    tol: float = 1e-6,
    max_iter: int = 200,
    variance_floor: float = VARIANCE_FLOOR,
) -> GmmModel:
    """Fit a diagonal-covariance mixture for each candidate K and keep the lowest BIC.

    EM stops when the relative log-likelihood gain drops below ``tol`` or after
    ``max_iter`` iterations. A decrease in log-likelihood between iterations
    raises ``EMMonotonicityError``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("fit_gmm expects a 2-d matrix")
    if not np.isfinite(X).all():
        raise ValueError("fit_gmm needs finite values")
    usable = sorted(k for k in set(k_candidates) if 1 <= k <= X.shape[0])
    if not usable:
        raise ValueError(f"no candidate K fits {X.shape[0]} samples: {sorted(k_candidates)}")
    best = None
    for K in usable:
        model = _fit_single(X, K, seed, tol, max_iter, variance_floor)
        if best is None or model.bic < best.bic:
            best = model
    return best


def sample_gmm(model: GmmModel, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``m`` rows: a component per row by weight, then a diagonal Gaussian draw."""
    if m == 0:
        return np.empty((0, model.d))
    comps = rng.choice(model.K, size=m, p=model.weights)
    z = rng.standard_normal((m, model.d))
    return model.means[comps] + np.sqrt(model.variances[comps]) * z
