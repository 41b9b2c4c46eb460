"""Graphical sketch encoder and latent bridge.

Forward path per graph: token embedding -> K rounds of (propagate along
the weighted adjacency, two affine+ReLU units, dropout, residual add) ->
pooling to one vector; then across the batch: FC -> batch norm -> Tanh
giving the sketch embedding psi, and the reparameterized latent
z = mu + sigma * eps on top.

Everything is plain numpy with hand-written backward passes; caches
returned by the forward functions carry exactly the values the backward
formulas need. Arrays keep whatever dtype the parameter store uses, so
training can run float32 while gradient audits run float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyLattice, OutOfRange, ShapeMismatch, TokenOutOfVocabulary
from .graph_builder import SketchGraph
from .params import ParameterStore

POOLING_MODES = ("mean", "sum")


@dataclass
class EncoderConfig:
    d: int = 128
    K: int = 2
    dropout_rate: float = 0.1
    pooling: str = "mean"
    embed_mode: str = "factorized"
    side: int = 256
    mlp_depth: int = 1          # affine+ReLU maps per MLP unit
    row_normalize: bool = False  # divide adjacency rows by their sums
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.d < 1 or self.K < 1 or self.mlp_depth < 1:
            raise OutOfRange("d, K and mlp_depth must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise OutOfRange(f"dropout_rate={self.dropout_rate} outside [0, 1)")
        if self.pooling not in POOLING_MODES:
            raise OutOfRange(f"unknown pooling {self.pooling!r}")
        if self.embed_mode not in ("joint", "factorized"):
            raise OutOfRange(f"unknown embed mode {self.embed_mode!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class LatentSample:
    psi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    eps: np.ndarray


def glorot(rng: np.random.Generator, shape, dtype) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _layer_affines(cfg: EncoderConfig, layer: int):
    """Names of the layer's affine maps in application order."""
    for unit in range(2):
        for s in range(cfg.mlp_depth):
            yield (
                f"enc.layer{layer}.u{unit}.W{s}",
                f"enc.layer{layer}.u{unit}.b{s}",
            )


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator,
                        dtype=np.float32, store: ParameterStore | None = None) -> ParameterStore:
    """Fresh encoder parameters appended to `store` (or a new one).

    Draw order is fixed so a seed pins every array.
    """
    if store is None:
        store = ParameterStore()
    d = cfg.d
    emb_scale = 1.0 / np.sqrt(d)
    if cfg.embed_mode == "joint":
        store.add("enc.emb.joint",
                  (rng.standard_normal((cfg.side * cfg.side, d)) * emb_scale).astype(dtype))
    else:
        store.add("enc.emb.x", (rng.standard_normal((cfg.side, d)) * emb_scale).astype(dtype))
        store.add("enc.emb.y", (rng.standard_normal((cfg.side, d)) * emb_scale).astype(dtype))
    for layer in range(cfg.K):
        for w_name, b_name in _layer_affines(cfg, layer):
            store.add(w_name, glorot(rng, (d, d), dtype))
            store.add(b_name, np.zeros(d, dtype=dtype))
    store.add("enc.fc.W", glorot(rng, (d, d), dtype))
    store.add("enc.fc.b", np.zeros(d, dtype=dtype))
    store.add("enc.bn.gamma", np.ones(d, dtype=dtype))
    store.add("enc.bn.beta", np.zeros(d, dtype=dtype))
    store.add("enc.bn.running_mean", np.zeros(d, dtype=dtype), trainable=False)
    store.add("enc.bn.running_var", np.ones(d, dtype=dtype), trainable=False)
    store.add("enc.mu.W", glorot(rng, (d, d), dtype))
    store.add("enc.mu.b", np.zeros(d, dtype=dtype))
    store.add("enc.sigma.W", glorot(rng, (d, d), dtype))
    store.add("enc.sigma.b", np.zeros(d, dtype=dtype))
    return store


def embed_nodes(tokens: np.ndarray, store: ParameterStore, cfg: EncoderConfig) -> np.ndarray:
    """Node features V (m x d): row lookup (joint) or x-row + y-row (factorized)."""
    tokens = np.asarray(tokens)
    if cfg.embed_mode == "joint":
        table = store["enc.emb.joint"]
        if tokens.ndim != 1:
            raise ShapeMismatch("joint tokens must be a flat index array")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= table.shape[0]):
            raise TokenOutOfVocabulary("joint token outside table")
        return table[tokens]
    tx, ty = store["enc.emb.x"], store["enc.emb.y"]
    if tokens.ndim != 2 or tokens.shape[1] != 2:
        raise ShapeMismatch("factorized tokens must be (m, 2)")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= tx.shape[0]):
        raise TokenOutOfVocabulary("coordinate token outside table")
    return tx[tokens[:, 0]] + ty[tokens[:, 1]]


def embed_nodes_backward(tokens: np.ndarray, dV: np.ndarray,
                         cfg: EncoderConfig, grads: dict) -> None:
    tokens = np.asarray(tokens)
    if cfg.embed_mode == "joint":
        np.add.at(grads["enc.emb.joint"], tokens, dV)
    else:
        np.add.at(grads["enc.emb.x"], tokens[:, 0], dV)
        np.add.at(grads["enc.emb.y"], tokens[:, 1], dV)


def propagate(V: np.ndarray, A: np.ndarray) -> np.ndarray:
    """One propagation step: V_hat = A @ V, no normalization."""
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[1] != V.shape[0]:
        raise ShapeMismatch(f"A {A.shape} does not match V {V.shape}")
    return A @ V


def _effective_adjacency(A: np.ndarray, cfg: EncoderConfig, dtype) -> np.ndarray:
    A = np.asarray(A, dtype=dtype)
    if cfg.row_normalize:
        sums = A.sum(axis=1, keepdims=True)
        A = A / np.maximum(sums, np.finfo(dtype).tiny)
    return A


def encode_layer(V: np.ndarray, A: np.ndarray, store: ParameterStore, cfg: EncoderConfig,
                 layer: int, train_mode: bool = False, rng=None):
    """V' = V + Dropout(ReLU-chained MLP units applied to A @ V); returns (V', cache)."""
    A_eff = _effective_adjacency(A, cfg, V.dtype)
    X = propagate(V, A_eff)
    acts = [X]
    for w_name, b_name in _layer_affines(cfg, layer):
        X = np.maximum(X @ store[w_name] + store[b_name], 0.0)
        acts.append(X)
    if train_mode and cfg.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        keep = 1.0 - cfg.dropout_rate
        dmask = (rng.random(X.shape) >= cfg.dropout_rate).astype(V.dtype) / keep
        branch = X * dmask
    else:
        dmask = None
        branch = X
    return V + branch, (A_eff, acts, dmask)


def encode_layer_backward(dout: np.ndarray, cache, store: ParameterStore,
                          cfg: EncoderConfig, layer: int, grads: dict) -> np.ndarray:
    A_eff, acts, dmask = cache
    d_branch = dout * dmask if dmask is not None else dout
    names = list(_layer_affines(cfg, layer))
    for idx in range(len(names) - 1, -1, -1):
        w_name, b_name = names[idx]
        d_pre = d_branch * (acts[idx + 1] > 0)
        grads[w_name] += acts[idx].T @ d_pre
        grads[b_name] += d_pre.sum(axis=0)
        d_branch = d_pre @ store[w_name].T
    return dout + A_eff.T @ d_branch


def pool_nodes(V: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    return V.mean(axis=0) if cfg.pooling == "mean" else V.sum(axis=0)


def encode_graphs(graphs, store: ParameterStore, cfg: EncoderConfig,
                  train_mode: bool = False, rng=None):
    """Batch encode: per-graph features pooled, then FC -> batch norm -> Tanh.

    Train mode uses batch statistics and updates the running ones
    (momentum cfg.bn_momentum); eval mode reads the running statistics
    and is a deterministic function of (graphs, params).
    Returns (Psi (B x d), cache for the backward pass).
    """
    if len(graphs) == 0:
        raise EmptyLattice("empty graph batch")
    dtype = store["enc.fc.W"].dtype
    pooled = np.zeros((len(graphs), cfg.d), dtype=dtype)
    graph_caches = []
    for b, g in enumerate(graphs):
        if g.m == 0:
            raise EmptyLattice("graph has no nodes")
        V = embed_nodes(g.tokens, store, cfg)
        layer_caches = []
        for layer in range(cfg.K):
            V, c = encode_layer(V, g.adjacency, store, cfg, layer, train_mode, rng)
            layer_caches.append(c)
        pooled[b] = pool_nodes(V, cfg)
        graph_caches.append((g.tokens, g.adjacency.shape[0], layer_caches))
    Y = pooled @ store["enc.fc.W"] + store["enc.fc.b"]
    gamma, beta = store["enc.bn.gamma"], store["enc.bn.beta"]
    if train_mode:
        mu_b = Y.mean(axis=0)
        var_b = Y.var(axis=0)
        ivar = 1.0 / np.sqrt(var_b + cfg.bn_eps)
        xhat = (Y - mu_b) * ivar
        mom = cfg.bn_momentum
        store["enc.bn.running_mean"] = (
            mom * store["enc.bn.running_mean"] + (1.0 - mom) * mu_b
        ).astype(dtype)
        store["enc.bn.running_var"] = (
            mom * store["enc.bn.running_var"] + (1.0 - mom) * var_b
        ).astype(dtype)
    else:
        ivar = 1.0 / np.sqrt(store["enc.bn.running_var"].astype(dtype) + cfg.bn_eps)
        xhat = (Y - store["enc.bn.running_mean"]) * ivar
    psi = np.tanh(gamma * xhat + beta)
    cache = (graph_caches, pooled, xhat, ivar, psi, train_mode)
    return psi, cache


def encode_graphs_backward(dpsi: np.ndarray, cache, store: ParameterStore,
                           cfg: EncoderConfig, grads: dict) -> None:
    graph_caches, pooled, xhat, ivar, psi, train_mode = cache
    if not train_mode:
        raise ValueError("backward needs a train-mode cache")
    d_bn = dpsi * (1.0 - psi * psi)
    grads["enc.bn.gamma"] += (d_bn * xhat).sum(axis=0)
    grads["enc.bn.beta"] += d_bn.sum(axis=0)
    dxhat = d_bn * store["enc.bn.gamma"]
    B = dpsi.shape[0]
    dY = (ivar / B) * (
        B * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
    )
    grads["enc.fc.W"] += pooled.T @ dY
    grads["enc.fc.b"] += dY.sum(axis=0)
    d_pooled = dY @ store["enc.fc.W"].T
    for b, (tokens, m, layer_caches) in enumerate(graph_caches):
        if cfg.pooling == "mean":
            dV = np.tile(d_pooled[b] / m, (m, 1))
        else:
            dV = np.tile(d_pooled[b], (m, 1))
        for layer in range(cfg.K - 1, -1, -1):
            dV = encode_layer_backward(dV, layer_caches[layer], store, cfg, layer, grads)
        embed_nodes_backward(tokens, dV, cfg, grads)


def encode(G: SketchGraph, store: ParameterStore, cfg: EncoderConfig,
           train_mode: bool = False, rng=None) -> np.ndarray:
    """Sketch embedding psi for one graph (entries strictly inside (-1, 1))."""
    psi, _ = encode_graphs([G], store, cfg, train_mode=train_mode, rng=rng)
    return psi[0]


def reparameterize(psi: np.ndarray, store: ParameterStore, rng=None,
                   noise: np.ndarray | None = None) -> LatentSample:
    """z = mu + sigma * eps with mu = psi W_mu + b, sigma = exp((psi W_sigma + b) / 2)."""
    psi = np.asarray(psi)
    mu = psi @ store["enc.mu.W"] + store["enc.mu.b"]
    u = psi @ store["enc.sigma.W"] + store["enc.sigma.b"]
    sigma = np.exp(0.5 * u)
    if noise is None:
        if rng is None:
            raise ValueError("need an rng when noise is not supplied")
        noise = rng.standard_normal(mu.shape).astype(mu.dtype)
    eps = np.asarray(noise, dtype=mu.dtype)
    if eps.shape != mu.shape:
        raise ShapeMismatch(f"noise {eps.shape} does not match mu {mu.shape}")
    return LatentSample(psi=psi, mu=mu, sigma=sigma, z=mu + sigma * eps, eps=eps)


def reparameterize_backward(dz: np.ndarray, sample: LatentSample,
                            store: ParameterStore, grads: dict) -> np.ndarray:
    """Gradient through z back to psi; fills the latent-bridge grads."""
    psi = np.atleast_2d(sample.psi)
    dz = np.atleast_2d(dz)
    du = dz * sample.eps * sample.sigma * 0.5  # dsigma/du = sigma/2
    du = np.atleast_2d(du)
    grads["enc.mu.W"] += psi.T @ dz
    grads["enc.mu.b"] += dz.sum(axis=0)
    grads["enc.sigma.W"] += psi.T @ du
    grads["enc.sigma.b"] += du.sum(axis=0)
    dpsi = dz @ store["enc.mu.W"].T + du @ store["enc.sigma.W"].T
    return dpsi.reshape(np.shape(sample.psi))


def count_parameters(store: ParameterStore) -> tuple:
    """Trainable element counts: ({name: count}, total)."""
    per_array = {n: int(store[n].size) for n in store.trainable_names()}
    return per_array, sum(per_array.values())
