"""Soft permutations via iterated row/column normalization, and hard rounding."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor


@dataclass
class SinkhornConfig:
    zeta: float = 0.1
    iterations: int = 20
    hidden: int = 16
    noise: bool = False

    def __post_init__(self):
        if self.zeta <= 0 or self.iterations < 1:
            raise ValueError(f"invalid sinkhorn config {self}")


@dataclass
class AlignmentPlan:
    P_soft: np.ndarray
    P_hard: np.ndarray | None = None


def sinkhorn(U, config: SinkhornConfig | None = None) -> Tensor:
    """Doubly-stochastic relaxation of ``exp(U / zeta)``.

    Each iteration divides by column sums, then by row sums. The per-matrix
    max of ``U / zeta`` is subtracted before exponentiating; when a sum gets
    close to underflow the same iteration runs on log-values instead.
    """
    config = config or SinkhornConfig()
    U = ad.as_tensor(U)
    # shift before scaling: the output ignores the shift, and U + c then gives the
    # same exponent bits whenever the additions are exact
    shift = ad.Tensor(U.value.max(axis=(-2, -1), keepdims=True))
    return ad.alternate_normalize(ad.mul(U - shift, 1.0 / config.zeta), (-2, -1) * config.iterations)


def sinkhorn_unfused(U, config: SinkhornConfig | None = None) -> Tensor:
    """Same operator built from elementary ops; slower, kept as a cross-check."""
    config = config or SinkhornConfig()
    L = ad.mul(ad.as_tensor(U), 1.0 / config.zeta)
    for _ in range(config.iterations):
        L = L - ad.logsumexp(L, axis=-2)
        L = L - ad.logsumexp(L, axis=-1)
    return ad.exp(L)


def sinkhorn_plain(U: np.ndarray, config: SinkhornConfig | None = None, iterations: int | None = None) -> np.ndarray:
    """Reference forward pass with explicit divisions (no autodiff)."""
    config = config or SinkhornConfig()
    S = np.exp(U / config.zeta - (U / config.zeta).max())
    for _ in range(config.iterations if iterations is None else iterations):
        S = S / S.sum(axis=-2, keepdims=True)
        S = S / S.sum(axis=-1, keepdims=True)
    return S


class GumbelSinkhorn:
    """``P = sinkhorn(FF(H_q) FF(H_c)^T)`` with FF = linear, ReLU, linear."""

    def __init__(self, store: ParameterStore, node_dim: int, config: SinkhornConfig | None = None,
                 prefix: str = "gs"):
        self.config = config or SinkhornConfig()
        h = self.config.hidden
        self.store = store
        self.W1 = store.uniform("phi", f"{prefix}.W1", (node_dim, h), 1.0 / np.sqrt(node_dim))
        self.b1 = store.uniform("phi", f"{prefix}.b1", (h,), 1.0 / np.sqrt(node_dim))
        self.W2 = store.uniform("phi", f"{prefix}.W2", (h, node_dim), 1.0 / np.sqrt(h))
        self.b2 = store.uniform("phi", f"{prefix}.b2", (node_dim,), 1.0 / np.sqrt(h))

    def ff(self, H: Tensor) -> Tensor:
        return ad.matmul(ad.relu(ad.matmul(H, self.W1) + self.b1), self.W2) + self.b2

    def scores(self, Hq: Tensor, Hc: Tensor) -> Tensor:
        return ad.matmul(self.ff(Hq), ad.transpose(self.ff(Hc)))

    def __call__(self, Hq: Tensor, Hc: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        U = self.scores(Hq, Hc)
        if self.config.noise:
            rng = rng or self.store.rng
            u = rng.uniform(1e-12, 1.0, size=U.shape)
            U = U + Tensor((-np.log(-np.log(u))).astype(U.dtype) * self.config.zeta)
        return sinkhorn(U, self.config)


def gs_align(Hq, Hc, gs: GumbelSinkhorn) -> AlignmentPlan:
    with ad.no_grad():
        P = gs(ad.as_tensor(Hq), ad.as_tensor(Hc)).value
    return AlignmentPlan(P)


def hungarian_round(P) -> np.ndarray:
    """Permutation ``perm`` maximizing ``sum_i P[i, perm[i]]``."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"hungarian_round needs a square matrix, got {P.shape}")
    rows, cols = linear_sum_assignment(P, maximize=True)
    perm = np.empty(P.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def matched_edges(A_q: np.ndarray, A_c: np.ndarray, perm: np.ndarray) -> list[tuple[int, int]]:
    """Edges of ``min(A_q, P A_c P^T)`` for the hard alignment ``q_i <-> c_perm[i]``,
    as (query_u, query_v) pairs with u < v."""
    mapped = A_c[np.ix_(perm, perm)]
    common = np.minimum(A_q, mapped)
    iu, ju = np.nonzero(np.triu(common, 1))
    return list(zip(iu.tolist(), ju.tolist()))


def format_alignment(query_id: str, corpus_id: str, perm: np.ndarray, nq: int, nc: int) -> str:
    pairs = ",".join(f"{i}:{int(perm[i])}" for i in range(len(perm)) if i < nq and perm[i] < nc)
    return f"{query_id}\t{corpus_id}\t{pairs}"


def write_alignment(path: str | Path, query_id: str, corpus_id: str, perm: np.ndarray, nq: int, nc: int,
                    edges: Iterable[tuple[int, int]]) -> None:
    edge_list = ",".join(f"{u}-{v}" for u, v in edges)
    Path(path).write_text(format_alignment(query_id, corpus_id, perm, nq, nc) + "\n"
                          + f"matched_edges\t{edge_list}\n", encoding="utf-8")
