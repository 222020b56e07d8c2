"""Corpus/query generation by randomized BFS sampling with the subgraph-isomorphism
fraction constraint and query augmentation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import Graph

log = logging.getLogger(__name__)


class SamplingError(RuntimeError):
    pass


class IndeterminateError(RuntimeError):
    """Subgraph-isomorphism search ran out of its expansion budget."""


class GenerationError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    min_nodes: int = 10
    max_nodes: int = 15
    eta_range: tuple[float, float] = (0.1, 0.4)
    corpus_count: int = 800
    query_count: int = 500
    augment_nodes: tuple[int, int] = (2, 5)
    augment_edge_prob: float = 0.2
    seed: int = 0
    retries: int = 50
    iso_budget: int = 200_000

    def __post_init__(self):
        self.eta_range = tuple(float(x) for x in self.eta_range)
        self.augment_nodes = tuple(int(x) for x in self.augment_nodes)
        if not 1 <= self.min_nodes <= self.max_nodes:
            raise ValueError(f"need 1 <= min_nodes <= max_nodes, got {self.min_nodes}, {self.max_nodes}")
        lo, hi = self.eta_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"bad eta_range {self.eta_range}")
        if not 0 <= self.augment_nodes[0] <= self.augment_nodes[1]:
            raise ValueError(f"bad augment_nodes {self.augment_nodes}")
        if not 0.0 <= self.augment_edge_prob <= 1.0:
            raise ValueError(f"augment_edge_prob must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eta_range"] = list(self.eta_range)
        d["augment_nodes"] = list(self.augment_nodes)
        return d


FULL_PROFILE = SamplerConfig()
DESK_PROFILE = SamplerConfig(min_nodes=8, max_nodes=12, corpus_count=100, query_count=50)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def bfs_sample(source: Graph, target_size: int, seed=None, new_id: str | None = None,
               retries: int = 50) -> Graph:
    """Induced subgraph on ``target_size`` nodes reached by a randomized BFS.

    The start node is uniform; each frontier expansion visits the current
    node's unvisited neighbours in random order.
    """
    if target_size < 1:
        raise SamplingError("target_size must be >= 1")
    rng = _rng(seed)
    nbrs = source.neighbors()
    gid = new_id or f"{source.id}_s"
    for _ in range(retries):
        start = int(rng.integers(source.num_nodes))
        visited = [start]
        seen = {start}
        queue = [start]
        while queue and len(visited) < target_size:
            u = queue.pop(0)
            for v in rng.permutation(nbrs[u]).tolist():
                if v not in seen:
                    seen.add(v)
                    visited.append(v)
                    queue.append(v)
                    if len(visited) == target_size:
                        break
        if len(visited) == target_size:
            return source.induced(visited, gid)
    raise SamplingError(f"no start node in {source.id!r} reached {target_size} nodes after {retries} tries")


def _masks(g: Graph) -> list[int]:
    m = [0] * g.num_nodes
    for u, v in g.edges:
        m[u] |= 1 << v
        m[v] |= 1 << u
    return m


def subgraph_isomorphic(small: Graph, big: Graph, time_budget: int | None = 200_000) -> bool:
    """Non-induced subgraph isomorphism (monomorphism) by backtracking.

    ``time_budget`` bounds the number of search-node expansions; exceeding it
    raises :class:`IndeterminateError`.
    """
    if small.num_nodes > big.num_nodes or small.num_edges > big.num_edges:
        return False
    sdeg, bdeg = small.degrees(), big.degrees()
    if any(a > b for a, b in zip(sorted(sdeg, reverse=True), sorted(bdeg, reverse=True))):
        return False
    sadj, badj = _masks(small), _masks(big)
    # order: connected, high-degree first
    order: list[int] = []
    placed = 0
    remaining = set(range(small.num_nodes))
    while remaining:
        u = max(remaining, key=lambda x: (bin(sadj[x] & placed).count("1"), sdeg[x], -x))
        order.append(u)
        remaining.discard(u)
        placed |= 1 << u
    n_big = big.num_nodes
    cand_static = [[b for b in range(n_big) if bdeg[b] >= sdeg[u]] for u in range(small.num_nodes)]
    mapping = [-1] * small.num_nodes
    expansions = 0

    def extend(depth: int, used: int) -> bool:
        nonlocal expansions
        expansions += 1
        if time_budget is not None and expansions > time_budget:
            raise IndeterminateError(f"subgraph search over {time_budget} expansions")
        if depth == len(order):
            return True
        u = order[depth]
        need = 0
        prior = sadj[u] & placed_masks[depth]
        for w in range(small.num_nodes):
            if prior >> w & 1:
                need |= 1 << mapping[w]
        for b in cand_static[u]:
            if used >> b & 1:
                continue
            if badj[b] & need != need:
                continue
            mapping[u] = b
            if extend(depth + 1, used | (1 << b)):
                return True
            mapping[u] = -1
        return False

    placed_masks = []
    acc = 0
    for u in order:
        placed_masks.append(acc)
        acc |= 1 << u
    return extend(0, 0)


def augment_query(seed_query: Graph, config: SamplerConfig, seed=None, new_id: str | None = None) -> Graph:
    """Attach ``k`` new nodes, each wired to at least one existing node, then add
    extra random edges touching the new nodes."""
    rng = _rng(seed)
    lo, hi = config.augment_nodes
    k = int(rng.integers(lo, hi + 1))
    n = seed_query.num_nodes
    edges = set(seed_query.edges)
    for i in range(k):
        new = n + i
        anchor = int(rng.integers(new))
        edges.add((anchor, new))
    total = n + k
    for new in range(n, total):
        for other in range(total):
            if other == new:
                continue
            key = (min(new, other), max(new, other))
            if key in edges:
                continue
            # each unordered pair is visited twice when both ends are new; decide once
            if other >= n and other < new:
                continue
            if rng.random() < config.augment_edge_prob:
                edges.add(key)
    return Graph(new_id or seed_query.id, total, tuple(edges))


def synthetic_sources(count: int, seed=0, min_size: int = 30, max_size: int = 60) -> list[Graph]:
    """Sparse molecule-like source graphs: chains with pendant and fused rings,
    node degree capped at 4."""
    rng = _rng(seed)
    out = []
    for idx in range(count):
        target = int(rng.integers(min_size, max_size + 1))
        ring = int(rng.choice([5, 6]))
        edges = {(i, (i + 1) % ring) if i < (i + 1) % ring else ((i + 1) % ring, i) for i in range(ring)}
        deg = [2] * ring
        n = ring
        while n < target:
            open_nodes = [u for u in range(n) if deg[u] < 3]
            if not open_nodes:
                break
            u = int(rng.choice(open_nodes))
            r = rng.random()
            if r < 0.25 and n + 6 <= target + 3:
                size = int(rng.choice([5, 6]))
                ring_nodes = list(range(n, n + size))
                for i in range(size):
                    a, b = ring_nodes[i], ring_nodes[(i + 1) % size]
                    edges.add((min(a, b), max(a, b)))
                edges.add((u, n))
                deg[u] += 1
                deg.extend([2] * size)
                deg[n] += 1
                n += size
            elif r < 0.35:
                # fuse a ring onto an existing bond at u
                partners = [v for (a, v) in edges if a == u and deg[v] < 3] + \
                           [a for (a, v) in edges if v == u and deg[a] < 3]
                if not partners:
                    continue
                v = int(rng.choice(partners))
                size = int(rng.choice([3, 4]))
                chain = list(range(n, n + size))
                path = [u] + chain + [v]
                for a, b in zip(path, path[1:]):
                    edges.add((min(a, b), max(a, b)))
                deg[u] += 1
                deg[v] += 1
                deg.extend([2] * size)
                n += size
            else:
                edges.add((u, n))
                deg[u] += 1
                deg.append(1)
                n += 1
        out.append(Graph(f"src{idx}", n, tuple(edges)))
    return out


def _sample_size(rng: np.random.Generator, config: SamplerConfig) -> int:
    return int(rng.integers(config.min_nodes, config.max_nodes + 1))


def _sample_from_sources(sources: list[Graph], config: SamplerConfig, rng, gid: str) -> Graph:
    for _ in range(config.retries):
        src = sources[int(rng.integers(len(sources)))]
        size = _sample_size(rng, config)
        if size > src.num_nodes:
            continue
        try:
            return bfs_sample(src, size, rng, new_id=gid, retries=10)
        except SamplingError:
            continue
    raise GenerationError(f"could not sample graph {gid} from {len(sources)} sources")


def containment_fraction(query: Graph, corpus: list[Graph], budget: int | None) -> float:
    hits = 0
    for c in corpus:
        try:
            if subgraph_isomorphic(query, c, budget):
                hits += 1
        except IndeterminateError:
            return float("nan")
    return hits / len(corpus)


@dataclass
class GenerationReport:
    attempts: int = 0
    accepted: int = 0
    fractions: list[float] = field(default_factory=list)
    seed_queries: list[Graph] = field(default_factory=list)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0


def generate_dataset(sources: list[Graph], config: SamplerConfig,
                     report: GenerationReport | None = None) -> tuple[list[Graph], list[Graph]]:
    """Sample ``corpus_count`` corpus graphs and ``query_count`` augmented queries.

    A seed query is kept only if it is subgraph-isomorphic to a fraction of the
    corpus inside ``eta_range``; the check runs before augmentation. Each
    emitted graph depends only on ``config.seed`` and its position.
    """
    if not sources:
        raise GenerationError("no source graphs")
    report = report if report is not None else GenerationReport()
    root = np.random.SeedSequence(config.seed)
    corpus_seq, query_seq = root.spawn(2)
    corpus = []
    for i, child in enumerate(corpus_seq.spawn(config.corpus_count)):
        corpus.append(_sample_from_sources(sources, config, np.random.default_rng(child), f"c{i}"))
    lo, hi = config.eta_range
    queries = []
    for i, child in enumerate(query_seq.spawn(config.query_count)):
        rng = np.random.default_rng(child)
        accepted = None
        for _ in range(config.retries):
            report.attempts += 1
            cand = _sample_from_sources(sources, config, rng, f"q{i}")
            frac = containment_fraction(cand, corpus, config.iso_budget)
            if lo <= frac <= hi:
                accepted = cand
                report.accepted += 1
                report.fractions.append(frac)
                break
        if accepted is None:
            raise GenerationError(
                f"query q{i}: no seed inside eta {config.eta_range} after {config.retries} attempts "
                f"(acceptance rate so far {report.accepted}/{report.attempts})")
        report.seed_queries.append(accepted)
        queries.append(augment_query(accepted, config, rng, new_id=f"q{i}"))
    log.info("generated %d corpus / %d queries, acceptance %.3f",
             len(corpus), len(queries), report.acceptance_rate)
    return corpus, queries
