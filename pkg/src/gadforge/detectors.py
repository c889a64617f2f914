"""Anomaly scorers: an MLP autoencoder plus two non-neural references.

Larger scores mean "more anomalous". Training never sees labels.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from gadforge import io
from gadforge.graph import AttributedGraph, degree_sequence
from gadforge.rng import stream

log = logging.getLogger(__name__)

_SCORE_BLOCK = 8192


@dataclass
class ScoreVector:
    scores: np.ndarray
    detector_id: str

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not np.isfinite(self.scores).all():
            raise ValueError(f"{self.detector_id}: non-finite scores")

    def __len__(self):
        return len(self.scores)


# -- MLP autoencoder -----------------------------------------------------------

@dataclass
class MlpaeConfig:
    hidden_dims: tuple = (64, 32)
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 1024
    patience: int = 10
    seed: int = 20

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ValueError("hidden dims must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def layer_dims(self, d: int) -> list:
        """Encoder ``d -> h1 -> ... -> hk`` mirrored by the decoder back to ``d``."""
        return [d, *self.hidden_dims, *self.hidden_dims[-2::-1], d]


@dataclass
class MlpaeModel:
    weights: list
    biases: list
    config: MlpaeConfig
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def d(self) -> int:
        return self.weights[0].shape[0]

    def save(self, path) -> None:
        io.write_checkpoint(path, self.weights, self.biases)

    @classmethod
    def load(cls, path, config: MlpaeConfig | None = None) -> "MlpaeModel":
        weights, biases = io.read_checkpoint(path)
        hidden = tuple(w.shape[1] for w in weights[: len(weights) // 2])
        return cls(weights, biases, config or MlpaeConfig(hidden_dims=hidden))


def init_params(dims, rng: np.random.Generator):
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-limit, limit, size=(a, b)))
        biases.append(np.zeros(b))
    return weights, biases


def forward(weights, biases, X):
    """Return the reconstruction and the per-layer ``(input, pre-activation)`` cache."""
    h = X
    cache = []
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = h @ W + b
        cache.append((h, z))
        h = z if i == last else np.maximum(z, 0.0)
    return h, cache


def loss_and_grad(weights, biases, X):
    """Mean squared reconstruction error over all cells and its parameter gradients."""
    out, cache = forward(weights, biases, X)
    resid = out - X
    loss = float(np.mean(resid * resid))
    dz = 2.0 * resid / resid.size
    gw, gb = [None] * len(weights), [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        h, _ = cache[i]
        gw[i] = h.T @ dz
        gb[i] = dz.sum(axis=0)
        if i:
            dz = (dz @ weights[i].T) * (cache[i - 1][1] > 0)
    return loss, gw, gb


def _mean_loss(weights, biases, X, ids, block=_SCORE_BLOCK):
    total = 0.0
    for s in range(0, len(ids), block):
        xb = np.asarray(X[ids[s:s + block]], dtype=np.float64)
        out, _ = forward(weights, biases, xb)
        total += float(((out - xb) ** 2).sum())
    return total / (len(ids) * X.shape[1])


def train_mlpae(features, train_ids, val_ids=None, config: MlpaeConfig | None = None, check=None) -> MlpaeModel:
    """Train by Adam on mini-batches of ``train_ids`` rows.

    With a non-empty ``val_ids`` the validation loss drives early stopping and
    the best-validation parameters are returned. ``check`` is called once per
    batch (budget enforcement hook).
    """
    config = config or MlpaeConfig()
    X = features
    train_ids = np.asarray(train_ids, dtype=np.int64)
    val_ids = np.asarray(val_ids if val_ids is not None else [], dtype=np.int64)
    if len(train_ids) == 0:
        raise ValueError("empty training set")
    if np.intersect1d(train_ids, val_ids).size:
        raise ValueError("train and validation ids overlap")
    d = X.shape[1]
    if d < 1:
        raise ValueError("features need at least one dimension")
    weights, biases = init_params(config.layer_dims(d), stream(config.seed, "mlpae/init"))
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    b1, b2 = config.adam_betas
    lr, eps = config.learning_rate, config.adam_eps
    model = MlpaeModel(weights, biases, config)
    best = (np.inf, None)
    wait = 0
    step = 0
    for epoch in range(config.epochs):
        order = train_ids[stream(config.seed, "mlpae/shuffle", epoch).permutation(len(train_ids))]
        seen, total = 0, 0.0
        for s in range(0, len(order), config.batch_size):
            if check is not None:
                check()
            xb = np.asarray(X[order[s:s + config.batch_size]], dtype=np.float64)
            loss, gw, gb = loss_and_grad(weights, biases, xb)
            total += loss * len(xb)
            seen += len(xb)
            step += 1
            c1, c2 = 1 - b1 ** step, 1 - b2 ** step
            for params, grads, m, v in ((weights, gw, m_w, v_w), (biases, gb, m_b, v_b)):
                for i, g in enumerate(grads):
                    m[i] = b1 * m[i] + (1 - b1) * g
                    v[i] = b2 * v[i] + (1 - b2) * g * g
                    params[i] = params[i] - lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)
        model.train_loss.append(total / seen)
        if len(val_ids):
            val = _mean_loss(weights, biases, X, val_ids)
            model.val_loss.append(val)
            if val < best[0]:
                best = (val, (copy.deepcopy(weights), copy.deepcopy(biases)))
                model.best_epoch = epoch
                wait = 0
            else:
                wait += 1
                if wait >= config.patience:
                    log.info("mlpae early stop at epoch %d (best %d)", epoch, model.best_epoch)
                    break
    if best[1] is not None:
        weights, biases = best[1]
    else:
        model.best_epoch = len(model.train_loss) - 1
    model.weights, model.biases = list(weights), list(biases)
    return model


def reconstruction_errors(model: MlpaeModel, features, check=None) -> np.ndarray:
    X = features
    if X.shape[1] != model.d:
        raise ValueError(f"model expects d={model.d}, features have d={X.shape[1]}")
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], _SCORE_BLOCK):
        if check is not None:
            check()
        xb = np.asarray(X[s:s + _SCORE_BLOCK], dtype=np.float64)
        rec, _ = forward(model.weights, model.biases, xb)
        out[s:s + len(xb)] = ((rec - xb) ** 2).mean(axis=1)
    return out


def score_mlpae(model: MlpaeModel, features, check=None) -> ScoreVector:
    return ScoreVector(reconstruction_errors(model, features, check), "mlpae")


# -- reference scorers ---------------------------------------------------------

def score_knn(features, train_ids, k: int = 10, check=None) -> ScoreVector:
    """Mean Euclidean distance to the ``k`` nearest training rows (never the row itself)."""
    X = np.asarray(features)
    train_ids = np.asarray(train_ids, dtype=np.int64)
    if not 1 <= k <= len(train_ids):
        raise ValueError(f"k must lie in 1..{len(train_ids)}, got {k}")
    T = X[train_ids].astype(np.float64)
    pos_in_train = np.full(X.shape[0], -1, dtype=np.int64)
    pos_in_train[train_ids] = np.arange(len(train_ids))
    block = max(1, (1 << 23) // max(1, len(train_ids)))
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], block):
        if check is not None:
            check()
        q = np.arange(s, min(s + block, X.shape[0]))
        dist = cdist(X[q].astype(np.float64), T)
        self_pos = pos_in_train[q]
        own = self_pos >= 0
        dist[np.flatnonzero(own), self_pos[own]] = np.inf
        # a training row has only |T|-1 candidates; when k == |T| the inf is averaged in
        kk = min(k, dist.shape[1])
        part = np.partition(dist, kk - 1, axis=1)[:, :kk]
        out[q] = part.mean(axis=1)
    if not np.isfinite(out).all():
        raise ValueError(f"k={k} leaves training rows without enough neighbours")
    return ScoreVector(out, "knn")


def score_degree(g: AttributedGraph) -> ScoreVector:
    """Robust z-score of ``log(1 + degree)``: ``|x - median| / MAD``.

    When more than half the nodes share the median degree (MAD = 0) the mean
    absolute deviation is used as the scale instead; a constant degree sequence
    scores all zeros.
    """
    if g.n == 0:
        raise ValueError("empty graph")
    x = np.log1p(degree_sequence(g).astype(np.float64))
    dev = np.abs(x - np.median(x))
    scale = np.median(dev)
    if scale == 0:
        scale = dev.mean()
    if scale == 0:
        return ScoreVector(np.zeros(g.n), "degree")
    return ScoreVector(dev / scale, "degree")
