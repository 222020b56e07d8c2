"""Message-passing GNN producing per-layer node embeddings and final-layer
directed edge (message) embeddings.

Graphs are encoded in batches of equal padded size ``N``: node tensors have
shape ``(G, N, d)`` and adjacency ``(G, N, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .graph import Graph


@dataclass
class EncoderConfig:
    R: int = 5
    node_dim: int = 10
    msg_dim: int = 20
    feature_dim: int = 1

    def __post_init__(self):
        if self.R < 1 or min(self.node_dim, self.msg_dim, self.feature_dim) < 1:
            raise ValueError(f"invalid encoder config {self}")


class GraphBatch:
    """Padded adjacency stack for a list of graphs."""

    def __init__(self, graphs: list[Graph], N: int, dtype=np.float64):
        self.graphs = list(graphs)
        self.N = N
        G = len(graphs)
        A = np.zeros((G, N, N), dtype=dtype)
        mask = np.zeros((G, N, 1), dtype=dtype)
        for i, g in enumerate(graphs):
            A[i] = g.adjacency(N)
            mask[i, :g.num_nodes] = 1.0
        self.A = A
        self.mask = mask
        self.deg = A.sum(axis=-1, keepdims=True)
        gi, u, v = np.nonzero(A)
        # directed edges (u -> v), flat row indices into (G * N)
        self.edge_graph = gi
        self.edge_src = gi * N + u
        self.edge_dst = gi * N + v
        self.edge_cell = gi * N * N + u * N + v
        self.edge_cell_rev = gi * N * N + v * N + u

    def __len__(self):
        return len(self.graphs)

    @property
    def dtype(self):
        return self.A.dtype

    def ids(self) -> list[str]:
        return [g.id for g in self.graphs]


@dataclass
class EdgeEmbeddings:
    M: Tensor            # (num_directed_edges, msg_dim)
    cell: np.ndarray     # flat (g, u, v) index of each row
    cell_rev: np.ndarray  # flat (g, v, u) index of each row


class GraphEncoder:
    """FeatureEncoder -> R x (MessagePassing, sum aggregation, GRU update).

    With ``cross_input`` the GRU input gains one extra column that carries a
    per-node cross-graph scalar (zero when no hook is supplied).
    """

    def __init__(self, store: ParameterStore, config: EncoderConfig, cross_input: bool = False,
                 prefix: str = "gnn"):
        self.config = config
        self.cross_input = cross_input
        d, de, f = config.node_dim, config.msg_dim, config.feature_dim
        in_dim = de + (1 if cross_input else 0)
        p = prefix
        self.feat_W = store.uniform("theta", f"{p}.feat_W", (f, d), 1.0 / np.sqrt(f))
        self.feat_b = store.uniform("theta", f"{p}.feat_b", (d,), 1.0 / np.sqrt(f))
        # one linear layer on [h_u ; h_v], stored as its two row blocks
        bound = 1.0 / np.sqrt(2 * d)
        self.msg_src = store.uniform("theta", f"{p}.msg_src", (d, de), bound)
        self.msg_dst = store.uniform("theta", f"{p}.msg_dst", (d, de), bound)
        self.msg_b = store.uniform("theta", f"{p}.msg_b", (de,), bound)
        gb = 1.0 / np.sqrt(d)
        self.gru_Wx = store.uniform("theta", f"{p}.gru_Wx", (in_dim, 3 * d), gb)
        self.gru_Wh = store.uniform("theta", f"{p}.gru_Wh", (d, 3 * d), gb)
        self.gru_bx = store.add("theta", f"{p}.gru_bx", np.zeros(3 * d))
        self.gru_bh = store.add("theta", f"{p}.gru_bh", np.zeros(3 * d))

    def features(self, batch: GraphBatch) -> Tensor:
        G, N = len(batch), batch.N
        z = np.ones((G, N, self.config.feature_dim), dtype=batch.dtype)
        return ad.matmul(Tensor(z), self.feat_W) + self.feat_b

    def aggregate(self, H: Tensor, batch: GraphBatch) -> Tensor:
        """Sum of incoming messages m_vu = Lin([h_v ; h_u]) over neighbours v."""
        A = Tensor(batch.A)
        deg = Tensor(batch.deg)
        from_nbrs = ad.matmul(A, ad.matmul(H, self.msg_src))
        own = ad.mul(deg, ad.matmul(H, self.msg_dst) + self.msg_b)
        return from_nbrs + own

    def gru(self, x: Tensor, h: Tensor) -> Tensor:
        d = self.config.node_dim
        gx = ad.matmul(x, self.gru_Wx) + self.gru_bx
        gh = ad.matmul(h, self.gru_Wh) + self.gru_bh
        r = ad.sigmoid(gx[..., :d] + gh[..., :d])
        z = ad.sigmoid(gx[..., d:2 * d] + gh[..., d:2 * d])
        n = ad.tanh(gx[..., 2 * d:] + r * gh[..., 2 * d:])
        return (1.0 - z) * n + z * h

    def step(self, H: Tensor, batch: GraphBatch, cross: Tensor | None = None) -> Tensor:
        msg = self.aggregate(H, batch)
        if self.cross_input:
            if cross is None:
                cross = Tensor(np.zeros(H.shape[:-1] + (1,), dtype=H.dtype))
            msg = ad.concat([msg, cross], axis=-1)
        elif cross is not None:
            raise ValueError("encoder built without cross input")
        return self.gru(msg, H)

    def encode(self, batch: GraphBatch, cross_hook=None) -> list[Tensor]:
        """Return ``[H(1), ..., H(R)]``.

        ``cross_hook(r, H)`` may return a ``(G, N, 1)`` tensor fed alongside the
        aggregated messages at layer ``r``.
        """
        H = self.features(batch)
        stack = []
        for r in range(self.config.R):
            cross = cross_hook(r, H) if cross_hook is not None else None
            H = self.step(H, batch, cross)
            stack.append(H)
        return stack

    def edge_embeddings(self, H: Tensor, batch: GraphBatch) -> EdgeEmbeddings:
        """Directed messages m_uv = Lin([h_u ; h_v]) for every edge, from ``H``."""
        G, N, d = H.shape
        flat = ad.reshape(H, (G * N, d))
        M = ad.take(ad.matmul(flat, self.msg_src), batch.edge_src) \
            + ad.take(ad.matmul(flat, self.msg_dst), batch.edge_dst) + self.msg_b
        return EdgeEmbeddings(M, batch.edge_cell, batch.edge_cell_rev)


def encode_graph(graph: Graph, encoder: GraphEncoder, N: int | None = None,
                 cross_hook=None) -> tuple[list[Tensor], EdgeEmbeddings]:
    """Single-graph convenience wrapper returning 2-D ``(N, d)`` layers."""
    batch = GraphBatch([graph], N or graph.num_nodes, encoder.feat_W.dtype)
    stack = encoder.encode(batch, cross_hook)
    edges = encoder.edge_embeddings(stack[-1], batch)
    return [h[0] for h in stack], edges
