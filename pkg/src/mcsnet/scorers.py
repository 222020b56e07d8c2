"""Relevance heads: LMCES, LMCCS (neural gossip), XMCS, COMBO and embed-min.

Every model scores pairs in batches: ``score(qb, cb)`` takes two aligned
:class:`GraphBatch` objects of equal length and returns a ``(G,)`` tensor.
Late-interaction models additionally split scoring into ``embed`` (per graph,
cacheable) and ``interact`` (per pair).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .align import GumbelSinkhorn, SinkhornConfig
from .autodiff import ParameterStore, Tensor
from .encoder import EncoderConfig, GraphBatch, GraphEncoder

MODEL_KINDS = ("lmces", "lmccs", "xmcs", "combo", "baseline")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    kind: str = "lmces"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    edge_hidden: int = 16
    thresh_hidden: int = 8
    lam: float = 1.0
    gossip_steps: int | None = None    # None -> padded size N
    rescale: bool = False

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.lam <= 0:
            raise ConfigError(f"temperature lambda must be positive, got {self.lam}")
        if self.gossip_steps is not None and self.gossip_steps < 1:
            raise ConfigError("gossip_steps must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "encoder": vars(self.encoder).copy(),
            "sinkhorn": vars(self.sinkhorn).copy(),
            "edge_hidden": self.edge_hidden,
            "thresh_hidden": self.thresh_hidden,
            "lam": self.lam,
            "gossip_steps": self.gossip_steps,
            "rescale": self.rescale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d.get("encoder", {}))
        d["sinkhorn"] = SinkhornConfig(**d.get("sinkhorn", {}))
        return cls(**d)


def _linear(store: ParameterStore, group: str, name: str, fan_in: int, fan_out: int):
    bound = 1.0 / np.sqrt(fan_in)
    return (store.uniform(group, f"{name}.W", (fan_in, fan_out), bound),
            store.uniform(group, f"{name}.b", (fan_out,), bound))


def sum_pair(X: Tensor) -> Tensor:
    """Sum over the last two axes: ``(G, N, d) -> (G,)``."""
    return ad.sum_(ad.sum_(X, axis=-1), axis=-1)


def coverage(Hq: Tensor, Hc: Tensor, P: Tensor) -> Tensor:
    """``sum_ij min(H_q, P H_c)_ij`` per pair."""
    return sum_pair(ad.minimum(Hq, ad.matmul(P, Hc)))


def residual(H: Tensor, aligned: Tensor) -> Tensor:
    """``H - min(H, aligned)``: the part of ``H`` not covered by the other graph."""
    return H - ad.minimum(H, aligned)


class EdgeScorer:
    """L_alpha: linear, ReLU, linear(-> 1) on each directed edge embedding."""

    def __init__(self, store: ParameterStore, msg_dim: int, hidden: int):
        self.W1, self.b1 = _linear(store, "alpha", "edge.l1", msg_dim, hidden)
        self.W2, self.b2 = _linear(store, "alpha", "edge.l2", hidden, 1)

    def __call__(self, M: Tensor) -> Tensor:
        return ad.matmul(ad.relu(ad.matmul(M, self.W1) + self.b1), self.W2) + self.b2

    def score_matrix(self, encoder: GraphEncoder, H: Tensor, batch: GraphBatch) -> Tensor:
        """Symmetric ``(G, N, N)`` edge-importance matrix supported on the edges.

        The scores of (u, v) and (v, u) are averaged.
        """
        G, N = len(batch), batch.N
        edges = encoder.edge_embeddings(H, batch)
        s = ad.mul(self(edges.M), 0.5)
        flat = ad.scatter_rows(s, edges.cell, G * N * N) + ad.scatter_rows(s, edges.cell_rev, G * N * N)
        return ad.reshape(flat, (G, N, N))


class NoiseFilter:
    """Thresh_beta: summary stats [mean, std, max] of X(T) -> linear, ReLU, linear, ReLU."""

    def __init__(self, store: ParameterStore, hidden: int):
        self.W1, self.b1 = _linear(store, "beta", "thresh.l1", 3, hidden)
        self.W2, self.b2 = _linear(store, "beta", "thresh.l2", hidden, 1)

    @staticmethod
    def stats(X: Tensor) -> Tensor:
        G = X.shape[0]
        flat = ad.reshape(X, (G, -1))
        mu = ad.mean(flat, axis=-1, keepdims=True)
        var = ad.mean((flat - mu) * (flat - mu), axis=-1, keepdims=True)
        sd = ad.sqrt(var + 1e-12)
        mx = ad.max_(flat, axis=-1, keepdims=True)
        return ad.concat([mu, sd, mx], axis=-1)

    def __call__(self, X: Tensor) -> Tensor:
        h = ad.relu(ad.matmul(self.stats(X), self.W1) + self.b1)
        tau = ad.relu(ad.matmul(h, self.W2) + self.b2)
        return ad.reshape(tau, (X.shape[0], 1, 1))


def gossip_power(B: Tensor, T: int, rescale: bool = False) -> Tensor:
    """``X(T) = (B + I)^T`` starting from ``X(0) = I``."""
    G, N, _ = B.shape
    eye = np.broadcast_to(np.eye(N, dtype=B.dtype), (G, N, N)).copy()
    step = B + Tensor(eye)
    X = Tensor(eye)
    for _ in range(T):
        X = ad.matmul(X, step)
        if rescale:
            X = X / ad.reshape(ad.max_(ad.reshape(X, (G, -1)), axis=-1), (G, 1, 1))
    return X


def gossip_readout(X: Tensor, tau, lam: float) -> Tensor:
    """``max_u || 2 sigmoid(relu(X - tau) / lam) - 1 ||_1`` over columns of X."""
    if lam <= 0:
        raise ConfigError(f"temperature lambda must be positive, got {lam}")
    Xh = ad.sigmoid(ad.relu(X - tau) * (1.0 / lam)) * 2.0 - 1.0
    return ad.max_(ad.col_l1(Xh), axis=-1)


def gossip_tail(B, T: int, lam: float, tau=0.0, noise_filter: NoiseFilter | None = None,
                rescale: bool = False) -> Tensor:
    """Neural gossip on a (batched) common-subgraph estimate ``B``.

    The threshold comes from ``noise_filter`` when given, else ``tau`` is used as is.
    """
    B = ad.as_tensor(B)
    if B.ndim == 2:
        B = ad.reshape(B, (1,) + B.shape)
    X = gossip_power(B, T, rescale)
    if noise_filter is not None:
        tau = noise_filter(X)
    return gossip_readout(X, tau, lam)


@dataclass
class Embedding:
    """Per-graph encoder output that late-interaction heads consume."""
    layers: list[Tensor]
    S: Tensor | None = None          # edge-score matrix (LMCCS)
    pooled: Tensor | None = None     # (G, d) sum-pooled final layer (baseline)

    def take(self, idx) -> "Embedding":
        return Embedding([ad.take(h, idx) for h in self.layers],
                         None if self.S is None else ad.take(self.S, idx),
                         None if self.pooled is None else ad.take(self.pooled, idx))


class MCSModel:
    """Base class wiring the shared parameter store."""

    kind = "base"
    late = True

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float64):
        self.config = config
        self.store = ParameterStore(seed=seed, dtype=dtype)

    @property
    def dtype(self):
        return self.store.dtype

    def embed(self, batch: GraphBatch) -> Embedding:
        raise NotImplementedError

    def interact(self, eq: Embedding, ec: Embedding, qb: GraphBatch, cb: GraphBatch) -> Tensor:
        raise NotImplementedError

    def score(self, qb: GraphBatch, cb: GraphBatch) -> Tensor:
        return self.interact(self.embed(qb), self.embed(cb), qb, cb)


class LMCES(MCSModel):
    """Layer-wise soft alignment and coverage, mixed by non-negative weights."""

    kind = "lmces"

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float64, shared=None):
        super().__init__(config, seed, dtype)
        enc = config.encoder
        if shared is not None:
            self.store, self.encoder, self.gs = shared
        else:
            self.encoder = GraphEncoder(self.store, enc)
            self.gs = GumbelSinkhorn(self.store, enc.node_dim, config.sinkhorn)
        self.w = self.store.add("w", "layer", np.full((enc.R, 1), 1.0 / enc.R))

    def embed(self, batch: GraphBatch) -> Embedding:
        return Embedding(self.encoder.encode(batch))

    def layer_coverages(self, eq: Embedding, ec: Embedding) -> Tensor:
        cols = [ad.reshape(coverage(hq, hc, self.gs(hq, hc)), (-1, 1))
                for hq, hc in zip(eq.layers, ec.layers)]
        return ad.concat(cols, axis=-1)          # (G, R)

    def interact(self, eq, ec, qb=None, cb=None) -> Tensor:
        return ad.reshape(ad.matmul(self.layer_coverages(eq, ec), self.w), (-1,))


class LMCCS(MCSModel):
    """Edge-scored common-subgraph estimate fed to the neural gossip readout."""

    kind = "lmccs"

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float64, shared=None):
        super().__init__(config, seed, dtype)
        enc = config.encoder
        if shared is not None:
            self.store, self.encoder, self.gs = shared
        else:
            self.encoder = GraphEncoder(self.store, enc)
            self.gs = GumbelSinkhorn(self.store, enc.node_dim, config.sinkhorn)
        self.edge = EdgeScorer(self.store, enc.msg_dim, config.edge_hidden)
        self.thresh = NoiseFilter(self.store, config.thresh_hidden)
        self.tau_override: float | None = None

    def embed(self, batch: GraphBatch) -> Embedding:
        layers = self.encoder.encode(batch)
        S = self.edge.score_matrix(self.encoder, layers[-1], batch)
        return Embedding(layers, S=S)

    def common_estimate(self, eq: Embedding, ec: Embedding, qb: GraphBatch, cb: GraphBatch) -> Tensor:
        P = self.gs(eq.layers[-1], ec.layers[-1])
        Bq = ad.mul(Tensor(qb.A), eq.S)
        Bc = ad.mul(Tensor(cb.A), ec.S)
        return ad.minimum(Bq, ad.matmul(ad.matmul(P, Bc), ad.transpose(P)))

    def interact(self, eq, ec, qb, cb) -> Tensor:
        B = self.common_estimate(eq, ec, qb, cb)
        T = self.config.gossip_steps or qb.N
        if self.tau_override is not None:
            return gossip_tail(B, T, self.config.lam, tau=self.tau_override, rescale=self.config.rescale)
        return gossip_tail(B, T, self.config.lam, noise_filter=self.thresh, rescale=self.config.rescale)


class XMCS(MCSModel):
    """Early interaction: at every layer the uncovered residual of each graph
    feeds the other's GRU update as a per-node scalar."""

    kind = "xmcs"
    late = False

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float64):
        super().__init__(config, seed, dtype)
        enc = config.encoder
        self.encoder = GraphEncoder(self.store, enc, cross_input=True)
        self.gs = GumbelSinkhorn(self.store, enc.node_dim, config.sinkhorn)

    def run(self, qb: GraphBatch, cb: GraphBatch, force_identity: bool = False):
        """Interleaved encoding; returns final layers, alignment, and per-layer residuals."""
        enc = self.encoder
        Hq, Hc = enc.features(qb), enc.features(cb)
        deltas = []
        eye = None
        if force_identity:
            eye = Tensor(np.broadcast_to(np.eye(qb.N, dtype=Hq.dtype), (len(qb), qb.N, qb.N)).copy())
        for _ in range(self.config.encoder.R):
            P = eye if force_identity else self.gs(Hq, Hc)
            dq = residual(Hq, ad.matmul(P, Hc))
            dc = residual(Hc, ad.matmul(ad.transpose(P), Hq))
            deltas.append((dq, dc))
            Hq, Hc = enc.step(Hq, qb, ad.row_sum(dq)), enc.step(Hc, cb, ad.row_sum(dc))
        P = eye if force_identity else self.gs(Hq, Hc)
        return Hq, Hc, P, deltas

    def score(self, qb: GraphBatch, cb: GraphBatch) -> Tensor:
        Hq, Hc, P, _ = self.run(qb, cb)
        return coverage(Hq, Hc, P)


class Combo(MCSModel):
    """``w1 * LMCCS + w2 * LMCES`` over one shared encoder and aligner."""

    kind = "combo"

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float64):
        super().__init__(config, seed, dtype)
        self.encoder = GraphEncoder(self.store, config.encoder)
        self.gs = GumbelSinkhorn(self.store, config.encoder.node_dim, config.sinkhorn)
        shared = (self.store, self.encoder, self.gs)
        self.lmces = LMCES(config, shared=shared)
        self.lmccs = LMCCS(config, shared=shared)
        self.mix = self.store.add("w", "combo", np.array([[0.5], [0.5]]))   # rows: w1 (lmccs), w2 (lmces)

    def embed(self, batch: GraphBatch) -> Embedding:
        layers = self.encoder.encode(batch)
        S = self.lmccs.edge.score_matrix(self.encoder, layers[-1], batch)
        return Embedding(layers, S=S)

    def head_scores(self, eq, ec, qb, cb) -> Tensor:
        s_ccs = self.lmccs.interact(eq, ec, qb, cb)
        s_ces = self.lmces.interact(eq, ec)
        return ad.concat([ad.reshape(s_ccs, (-1, 1)), ad.reshape(s_ces, (-1, 1))], axis=-1)

    def interact(self, eq, ec, qb, cb) -> Tensor:
        return ad.reshape(ad.matmul(self.head_scores(eq, ec, qb, cb), self.mix), (-1,))


class EmbedMin(MCSModel):
    """Baseline: ``sum_i min(h_q, h_c)_i`` over sum-pooled final-layer embeddings."""

    kind = "baseline"

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float64):
        super().__init__(config, seed, dtype)
        self.encoder = GraphEncoder(self.store, config.encoder)

    def embed(self, batch: GraphBatch) -> Embedding:
        layers = self.encoder.encode(batch)
        # pool real nodes only, so padding does not leak into the graph vector
        pooled = ad.sum_(ad.mul(layers[-1], Tensor(batch.mask)), axis=-2)
        return Embedding(layers, pooled=pooled)

    def interact(self, eq, ec, qb=None, cb=None) -> Tensor:
        return ad.sum_(ad.minimum(eq.pooled, ec.pooled), axis=-1)


_MODELS = {"lmces": LMCES, "lmccs": LMCCS, "xmcs": XMCS, "combo": Combo, "baseline": EmbedMin}


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float64) -> MCSModel:
    return _MODELS[config.kind](config, seed=seed, dtype=dtype)


def score_pairs(model: MCSModel, queries, corpus, N: int) -> np.ndarray:
    """Forward-only scores for aligned lists of query and corpus graphs."""
    with ad.no_grad():
        qb = GraphBatch(list(queries), N, model.dtype)
        cb = GraphBatch(list(corpus), N, model.dtype)
        return model.score(qb, cb).value.copy()
