"""Exact combinatorial MCES / MCCS solvers and connected-component references.

These produce the ground-truth labels and double as test oracles for the
neural scorers. Sizes are reported in human units: edges for MCES, nodes for
MCCS.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import Graph, LabelRecord, PaddedPair, build_padded_pair, combo_label


class BudgetError(RuntimeError):
    pass


class ValidationError(ValueError):
    pass


@dataclass
class McsResult:
    value: int
    mapping: dict[int, int] = field(default_factory=dict)  # corpus node -> query node
    proven_optimal: bool = True
    expansions: int = 0


def _check_adjacency(B) -> np.ndarray:
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError(f"adjacency must be square, got shape {B.shape}")
    if not np.array_equal(B, B.T):
        raise ValidationError("adjacency is not symmetric")
    if not np.isin(B, (0, 1)).all():
        raise ValidationError("adjacency entries must be 0/1")
    return B.astype(np.int64)


def connected_components(B) -> list[set[int]]:
    B = _check_adjacency(B)
    n = B.shape[0]
    seen = [False] * n
    comps = []
    nbrs = [np.flatnonzero(B[u]).tolist() for u in range(n)]
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        comp = {s}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.add(v)
                    queue.append(v)
        comps.append(comp)
    return comps


def largest_cc(B) -> int:
    B = np.asarray(B)
    if B.shape[0] == 0:
        return 0
    return max(len(c) for c in connected_components(B))


def exact_gossip(B, T: int, exact_power: bool = True) -> int:
    """Largest component size via the gossip recursion ``X <- X (B + I)``.

    With ``exact_power`` the matrix powers are carried in unbounded Python
    integers; otherwise the boolean reachability variant is used, which has
    the same non-zero pattern.
    """
    B = _check_adjacency(B)
    n = B.shape[0]
    if n == 0:
        return 0
    if exact_power:
        step = (B + np.eye(n, dtype=np.int64)).astype(object)
        X = np.eye(n, dtype=np.int64).astype(object)
        for _ in range(T):
            X = X.dot(step)
        nonzero = X != 0
    else:
        step = (B + np.eye(n, dtype=np.int64)) > 0
        X = np.eye(n, dtype=bool)
        for _ in range(T):
            X = (X.astype(np.int64) @ step.astype(np.int64)) > 0
        nonzero = X
    return int(nonzero.sum(axis=0).max())


def common_adjacency(A_q: np.ndarray, A_c: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    """``min(A_q, P A_c P^T)`` where query node ``i`` is aligned to corpus node ``perm[i]``."""
    p = np.asarray(perm)
    return np.minimum(A_q, A_c[np.ix_(p, p)])


def score_mapping_mces(query: Graph, corpus: Graph, mapping: dict[int, int]) -> int:
    qedges = set(query.edges)
    count = 0
    for u, v in corpus.edges:
        if u in mapping and v in mapping:
            a, b = mapping[u], mapping[v]
            if (min(a, b), max(a, b)) in qedges:
                count += 1
    return count


def score_mapping_mccs(query: Graph, corpus: Graph, mapping: dict[int, int]) -> int:
    """Largest connected component (in nodes) of the common subgraph induced by ``mapping``."""
    if query.num_nodes == 0 or corpus.num_nodes == 0:
        return 0
    qedges = set(query.edges)
    nodes = list(mapping)
    if not nodes:
        return 1
    index = {u: i for i, u in enumerate(nodes)}
    B = np.zeros((len(nodes), len(nodes)), dtype=np.int64)
    for u, v in corpus.edges:
        if u in mapping and v in mapping:
            a, b = mapping[u], mapping[v]
            if (min(a, b), max(a, b)) in qedges:
                B[index[u], index[v]] = B[index[v], index[u]] = 1
    return largest_cc(B)


def _all_perms(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


def brute_force_mces(pair: PaddedPair, max_n: int = 7) -> McsResult:
    N = pair.N
    if N > max_n:
        raise ValidationError(f"padded size {N} exceeds brute-force limit {max_n}")
    perms = _all_perms(N)
    mapped = pair.A_c[perms[:, :, None], perms[:, None, :]]
    totals = np.minimum(pair.A_q[None], mapped).sum(axis=(1, 2)) // 2
    best = int(np.argmax(totals))
    return McsResult(int(totals[best]), _perm_to_mapping(pair, perms[best]), True, len(perms))


def brute_force_mccs(pair: PaddedPair, max_n: int = 7) -> McsResult:
    N = pair.N
    if N > max_n:
        raise ValidationError(f"padded size {N} exceeds brute-force limit {max_n}")
    perms = _all_perms(N)
    best_val, best_perm = -1, perms[0]
    for p in perms:
        val = largest_cc(common_adjacency(pair.A_q, pair.A_c, p))
        if val > best_val:
            best_val, best_perm = val, p
    return McsResult(best_val, _perm_to_mapping(pair, best_perm), True, len(perms))


def _perm_to_mapping(pair: PaddedPair, perm) -> dict[int, int]:
    nq, nc = pair.query.num_nodes, pair.corpus.num_nodes
    return {int(c): int(q) for q, c in enumerate(perm) if q < nq and c < nc}


def _masks(g: Graph) -> list[int]:
    masks = [0] * g.num_nodes
    for u, v in g.edges:
        masks[u] |= 1 << v
        masks[v] |= 1 << u
    return masks


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _bits(x: int) -> Iterable[int]:
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


def _internal_degrees(adj: list[int], mask: int) -> list[int]:
    return sorted((_popcount(adj[u] & mask) for u in _bits(mask)), reverse=True)


class _MCESSearch:
    """Branch and bound over corpus-to-query assignments (or 'unmatched')."""

    def __init__(self, query: Graph, corpus: Graph, budget: int | None):
        self.qadj = _masks(query)
        self.cadj = _masks(corpus)
        self.budget = budget
        self.expansions = 0
        self.exhausted = False
        self.best = -1
        self.best_map: dict[int, int] = {}
        self.q_active = sum(1 << a for a in range(query.num_nodes) if self.qadj[a])
        self.order = self._order(corpus)
        self.max_edges = min(query.num_edges, corpus.num_edges)

    def _order(self, corpus: Graph) -> list[int]:
        deg = [_popcount(m) for m in self.cadj]
        remaining = {u for u in range(corpus.num_nodes) if deg[u]}
        order: list[int] = []
        placed = 0
        while remaining:
            u = max(remaining, key=lambda x: (_popcount(self.cadj[x] & placed), deg[x], -x))
            order.append(u)
            remaining.discard(u)
            placed |= 1 << u
        return order

    def run(self) -> McsResult:
        unassigned = sum(1 << u for u in self.order)
        self.best, self.best_map = 0, {}
        self._search(0, {}, unassigned, self.q_active, 0)
        return McsResult(self.best, dict(self.best_map), not self.exhausted, self.expansions)

    def _bound(self, assign: dict[int, int], unassigned: int, free: int) -> int:
        cross = 0
        for v, a in assign.items():
            if a >= 0:
                cross += min(_popcount(self.cadj[v] & unassigned), _popcount(self.qadj[a] & free))
        dc = _internal_degrees(self.cadj, unassigned)
        dq = _internal_degrees(self.qadj, free)
        ec, eq = sum(dc) // 2, sum(dq) // 2
        paired = sum(min(x, y) for x, y in zip(dc, dq)) // 2
        return cross + min(ec, eq, paired)

    def _search(self, depth: int, assign: dict[int, int], unassigned: int, free: int, value: int):
        if self.exhausted:
            return
        self.expansions += 1
        if self.budget is not None and self.expansions > self.budget:
            self.exhausted = True
            return
        if value > self.best:
            self.best = value
            self.best_map = {c: q for c, q in assign.items() if q >= 0}
            if self.best == self.max_edges:
                return
        if depth == len(self.order) or not free:
            return
        if value + self._bound(assign, unassigned, free) <= self.best:
            return
        u = self.order[depth]
        # image of u's already-matched corpus neighbours
        target = 0
        for v in _bits(self.cadj[u] & ~unassigned):
            a = assign[v]
            if a >= 0:
                target |= 1 << a
        rest = unassigned & ~(1 << u)
        cands = sorted(_bits(free), key=lambda a: (-_popcount(self.qadj[a] & target),
                                                    -_popcount(self.qadj[a]), a))
        for a in cands:
            gain = _popcount(self.qadj[a] & target)
            assign[u] = a
            self._search(depth + 1, assign, rest, free & ~(1 << a), value + gain)
            del assign[u]
            if self.exhausted or self.best == self.max_edges:
                return
        assign[u] = -1
        self._search(depth + 1, assign, rest, free, value)
        del assign[u]


def exact_mces(pair: PaddedPair, budget: int | None = None) -> McsResult:
    """Maximum common edge subgraph size (edges) by branch and bound.

    ``budget`` caps search-node expansions; when hit, the best mapping found so
    far is returned with ``proven_optimal=False``.
    """
    return _MCESSearch(pair.query, pair.corpus, budget).run()


class _MCCSSearch:
    """Grow a connected common region by include/exclude branching on extensions."""

    def __init__(self, query: Graph, corpus: Graph, budget: int | None, upper: int | None,
                 initial: dict[int, int] | None = None):
        self.qadj = _masks(query)
        self.cadj = _masks(corpus)
        self.nq, self.nc = query.num_nodes, corpus.num_nodes
        self.budget = budget
        self.expansions = 0
        self.exhausted = False
        lcc_q = max(len(c) for c in connected_components(query.adjacency()))
        lcc_c = max(len(c) for c in connected_components(corpus.adjacency()))
        self.upper = min(lcc_q, lcc_c)
        if upper is not None:
            self.upper = min(self.upper, upper)
        self.best = 1
        self.best_map: dict[int, int] = {0: 0}
        if initial:
            comp = _largest_common_component(query, corpus, initial)
            if len(comp) > self.best:
                self.best, self.best_map = len(comp), comp

    def _reach(self, adj: list[int], seeds: int, allowed: int) -> int:
        seen = seeds
        frontier = seeds
        while frontier:
            nxt = 0
            for u in _bits(frontier):
                nxt |= adj[u]
            nxt &= allowed & ~seen
            seen |= nxt
            frontier = nxt
        return seen & ~seeds

    def _growth_bound(self, mapping: dict[int, int], reach_c: int, reach_q: int) -> int:
        # new nodes each need a new spanning-tree edge with at least one endpoint outside the region
        cross = 0
        for v, b in mapping.items():
            cross += min(_popcount(self.cadj[v] & reach_c), _popcount(self.qadj[b] & reach_q))
        dc = _internal_degrees(self.cadj, reach_c)
        dq = _internal_degrees(self.qadj, reach_q)
        paired = sum(min(x, y) for x, y in zip(dc, dq)) // 2
        internal = min(sum(dc) // 2, sum(dq) // 2, paired)
        return min(_popcount(reach_c), _popcount(reach_q), cross + internal)

    def run(self) -> McsResult:
        if self.upper <= 1:
            return McsResult(1, dict(self.best_map), True, 0)
        deg_c = [_popcount(m) for m in self.cadj]
        roots = sorted((u for u in range(self.nc) if deg_c[u]), key=lambda u: (-deg_c[u], u))
        q_nodes = sorted((a for a in range(self.nq) if self.qadj[a]),
                         key=lambda a: (-_popcount(self.qadj[a]), a))
        forbidden = 0
        for c0 in roots:
            for a0 in q_nodes:
                self._search({c0: a0}, 1 << c0, 1 << a0, forbidden, frozenset())
                if self.exhausted or self.best == self.upper:
                    return self._result()
            forbidden |= 1 << c0
        return self._result()

    def _result(self) -> McsResult:
        return McsResult(self.best, dict(self.best_map), not self.exhausted, self.expansions)

    def _search(self, mapping: dict[int, int], cmask: int, qmask: int, forbidden: int,
                excluded: frozenset):
        if self.exhausted:
            return
        self.expansions += 1
        if self.budget is not None and self.expansions > self.budget:
            self.exhausted = True
            return
        size = len(mapping)
        if size > self.best:
            self.best = size
            self.best_map = dict(mapping)
            if size == self.upper:
                return
        c_allowed = ~(cmask | forbidden) & ((1 << self.nc) - 1)
        q_allowed = ~qmask & ((1 << self.nq) - 1)
        reach_c = self._reach(self.cadj, cmask, c_allowed)
        reach_q = self._reach(self.qadj, qmask, q_allowed)
        if size + self._growth_bound(mapping, reach_c, reach_q) <= self.best:
            return
        ext = self._first_extension(mapping, c_allowed, q_allowed, excluded)
        if ext is None:
            return
        u, a = ext
        mapping[u] = a
        self._search(mapping, cmask | (1 << u), qmask | (1 << a), forbidden, excluded)
        del mapping[u]
        if self.exhausted or self.best == self.upper:
            return
        self._search(mapping, cmask, qmask, forbidden, excluded | {(u, a)})

    def _first_extension(self, mapping, c_allowed, q_allowed, excluded):
        for v, b in mapping.items():
            for u in _bits(self.cadj[v] & c_allowed):
                for a in _bits(self.qadj[b] & q_allowed):
                    if (u, a) not in excluded:
                        return u, a
        return None


def _largest_common_component(query: Graph, corpus: Graph, mapping: dict[int, int]) -> dict[int, int]:
    qedges = set(query.edges)
    nbrs: dict[int, list[int]] = {u: [] for u in mapping}
    for u, v in corpus.edges:
        if u in mapping and v in mapping:
            a, b = mapping[u], mapping[v]
            if (min(a, b), max(a, b)) in qedges:
                nbrs[u].append(v)
                nbrs[v].append(u)
    best: set[int] = set()
    seen: set[int] = set()
    for s in mapping:
        if s in seen:
            continue
        comp, stack = {s}, [s]
        seen.add(s)
        while stack:
            u = stack.pop()
            for v in nbrs[u]:
                if v not in seen:
                    seen.add(v)
                    comp.add(v)
                    stack.append(v)
        if len(comp) > len(best):
            best = comp
    return {u: mapping[u] for u in sorted(best)}


def exact_mccs(pair: PaddedPair, budget: int | None = None, upper: int | None = None,
               initial: dict[int, int] | None = None) -> McsResult:
    """Maximum common connected subgraph size (nodes) by branch and bound.

    Two non-empty graphs always share a single node, so the value is at least 1.
    ``upper`` optionally supplies a known upper bound (e.g. MCES + 1) and
    ``initial`` a mapping whose largest common component seeds the incumbent.
    """
    return _MCCSSearch(pair.query, pair.corpus, budget, upper, initial).run()


def label_pair(query: Graph, corpus: Graph, combo_a: float | None = None,
               budget: int | None = None) -> LabelRecord:
    pair = build_padded_pair(query, corpus)
    mces = exact_mces(pair, budget)
    # a connected common subgraph on k nodes has k-1 common edges, so MCCS <= MCES + 1
    mccs = exact_mccs(pair, budget, upper=mces.value + 1 if mces.proven_optimal else None,
                      initial=mces.mapping)
    if not (mces.proven_optimal and mccs.proven_optimal):
        raise BudgetError(f"budget exhausted labelling ({query.id}, {corpus.id})")
    combo = None if combo_a is None else combo_label(mces.value, mccs.value, combo_a)
    return LabelRecord(query.id, corpus.id, mces.value, mccs.value, combo)


def _label_chunk(args):
    queries, corpus, combo_a, budget = args
    return [label_pair(q, c, combo_a, budget) for q in queries for c in corpus]


def label_pairs(queries: Sequence[Graph], corpus: Sequence[Graph], combo_a: float | None = None,
                budget: int | None = None, workers: int = 1) -> list[LabelRecord]:
    """Exact labels for every (query, corpus) pair, ordered query-major."""
    if combo_a is not None and not 0.0 <= combo_a <= 1.0:
        raise ValidationError(f"combo_a must lie in [0, 1], got {combo_a}")
    if workers <= 1 or len(queries) <= 1:
        return _label_chunk((list(queries), list(corpus), combo_a, budget))
    from concurrent.futures import ProcessPoolExecutor

    chunks = [([q], list(corpus), combo_a, budget) for q in queries]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_label_chunk, chunks))
    return [r for part in parts for r in part]


def mcs_upper_bounds(query: Graph, corpus: Graph) -> tuple[int, int]:
    return min(query.num_edges, corpus.num_edges), min(query.num_nodes, corpus.num_nodes)


__all__ = [
    "BudgetError", "ValidationError", "McsResult", "connected_components", "largest_cc",
    "exact_gossip", "exact_mces", "exact_mccs", "brute_force_mces", "brute_force_mccs",
    "label_pair", "label_pairs", "common_adjacency", "score_mapping_mces",
    "score_mapping_mccs", "mcs_upper_bounds",
]

