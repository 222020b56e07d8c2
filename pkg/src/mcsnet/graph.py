"""Graph data model, per-pair padding and the line-delimited dataset format."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphFormatError(ValueError):
    """Malformed dataset or label record."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PaddingError(ValueError):
    pass


def _normalize_edges(num_nodes: int, edges: Iterable[Sequence[int]]) -> tuple[tuple[int, int], ...]:
    out = set()
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if u == v:
            raise GraphFormatError(f"self-loop ({u},{v})")
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise GraphFormatError(f"endpoint out of range ({u},{v}) for {num_nodes} nodes")
        key = (u, v) if u < v else (v, u)
        if key in out:
            raise GraphFormatError(f"duplicate edge {key}")
        out.add(key)
    return tuple(sorted(out))


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph. Edges are canonical: ``u < v``, sorted."""

    id: str
    num_nodes: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        if self.num_nodes < 1:
            raise GraphFormatError(f"graph {self.id!r} needs at least one node")
        object.__setattr__(self, "edges", _normalize_edges(self.num_nodes, self.edges))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self, n: int | None = None) -> np.ndarray:
        n = self.num_nodes if n is None else n
        if n < self.num_nodes:
            raise PaddingError(f"cannot pad {self.num_nodes}-node graph {self.id!r} to {n}")
        a = np.zeros((n, n), dtype=np.int64)
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = 1
            a[e[:, 1], e[:, 0]] = 1
        return a

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return nbrs

    def degrees(self) -> list[int]:
        deg = [0] * self.num_nodes
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def relabel(self, perm: Sequence[int], new_id: str | None = None) -> "Graph":
        """Return the graph with node ``u`` renamed to ``perm[u]``."""
        return Graph(new_id or self.id, self.num_nodes,
                     tuple((perm[u], perm[v]) for u, v in self.edges))

    def induced(self, nodes: Sequence[int], new_id: str) -> "Graph":
        index = {u: i for i, u in enumerate(nodes)}
        edges = [(index[u], index[v]) for u, v in self.edges if u in index and v in index]
        return Graph(new_id, len(nodes), tuple(edges))

    @classmethod
    def from_adjacency(cls, gid: str, a: np.ndarray) -> "Graph":
        a = np.asarray(a)
        iu, ju = np.nonzero(np.triu(a, 1))
        return cls(gid, a.shape[0], tuple(zip(iu.tolist(), ju.tolist())))


@dataclass(frozen=True)
class PaddedPair:
    query: Graph
    corpus: Graph
    N: int
    A_q: np.ndarray = field(repr=False)
    A_c: np.ndarray = field(repr=False)


def build_padded_pair(query: Graph, corpus: Graph, N: int | None = None) -> PaddedPair:
    """Pad both adjacency matrices to ``N`` with isolated nodes.

    ``N`` defaults to the larger node count (minimal per-pair padding).
    """
    need = max(query.num_nodes, corpus.num_nodes)
    if N is None:
        N = need
    if N < need:
        raise PaddingError(f"padded size {N} smaller than {need} nodes")
    return PaddedPair(query, corpus, N, query.adjacency(N), corpus.adjacency(N))


@dataclass(frozen=True)
class LabelRecord:
    query_id: str
    corpus_id: str
    y_mces: int
    y_mccs: int
    y_combo: float | None = None

    def target(self, name: str) -> float:
        if name == "mces":
            return float(self.y_mces)
        if name == "mccs":
            return float(self.y_mccs)
        if name == "combo":
            if self.y_combo is None:
                raise KeyError("label file carries no combo column")
            return float(self.y_combo)
        raise KeyError(f"unknown target {name!r}")


def combo_label(y_mces: float, y_mccs: float, a: float) -> float:
    return a * y_mccs + (1.0 - a) * y_mces


def format_graph(g: Graph) -> str:
    return f"{g.id}\t{g.num_nodes}\t" + ",".join(f"{u}-{v}" for u, v in g.edges)


def parse_graph(line: str, lineno: int | None = None) -> Graph:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 3:
        raise GraphFormatError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
    gid, n_str, edge_str = parts
    if not gid:
        raise GraphFormatError("empty graph id", lineno)
    try:
        n = int(n_str)
    except ValueError:
        raise GraphFormatError(f"bad node count {n_str!r}", lineno) from None
    edges = []
    if edge_str:
        for tok in edge_str.split(","):
            try:
                u_str, v_str = tok.split("-")
                u, v = int(u_str), int(v_str)
            except ValueError:
                raise GraphFormatError(f"bad edge token {tok!r}", lineno) from None
            if u > v:
                raise GraphFormatError(f"edge {tok!r} not stored with u < v", lineno)
            edges.append((u, v))
    try:
        return Graph(gid, n, tuple(edges))
    except GraphFormatError as exc:
        raise GraphFormatError(str(exc), lineno) from None


def load_dataset(path: str | Path) -> list[Graph]:
    graphs: list[Graph] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            g = parse_graph(line, lineno)
            if g.id in seen:
                raise GraphFormatError(f"duplicate graph id {g.id!r}", lineno)
            seen.add(g.id)
            graphs.append(g)
    return graphs


def save_dataset(graphs: Iterable[Graph], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(format_graph(g) + "\n")


def save_labels(records: Iterable[LabelRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            row = [r.query_id, r.corpus_id, str(r.y_mces), str(r.y_mccs)]
            if r.y_combo is not None:
                row.append(repr(float(r.y_combo)))
            fh.write("\t".join(row) + "\n")


def load_labels(path: str | Path) -> list[LabelRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) not in (4, 5):
                raise GraphFormatError(f"expected 4 or 5 fields, got {len(parts)}", lineno)
            try:
                combo = float(parts[4]) if len(parts) == 5 else None
                rec = LabelRecord(parts[0], parts[1], int(parts[2]), int(parts[3]), combo)
            except ValueError as exc:
                raise GraphFormatError(str(exc), lineno) from None
            if rec.y_mces < 0 or rec.y_mccs < 0:
                raise GraphFormatError("negative label", lineno)
            out.append(rec)
    return out


def max_nodes(graphs: Iterable[Graph]) -> int:
    return max(g.num_nodes for g in graphs)
