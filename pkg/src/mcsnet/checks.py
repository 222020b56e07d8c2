"""Self-verification suites: randomized property checks against exact oracles.

Each check returns a :class:`CheckResult` counting passing trials.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .align import SinkhornConfig, hungarian_round, sinkhorn
from .encoder import GraphBatch
from .graph import Graph, build_padded_pair
from .oracle import brute_force_mccs, brute_force_mces, exact_gossip, exact_mccs, exact_mces, largest_cc
from .scorers import MODEL_KINDS, ModelConfig, build_model, gossip_tail, residual
from .evalkit import kendall_tau, pair_rank

SUITES = ("gradcheck", "gossip", "oracle", "sinkhorn", "invariants")


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: int
    total: int
    detail: str = ""
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status}\t{self.suite}\t{self.name}\t{self.passed}/{self.total}\t{self.detail}"


# ---- random instances -----------------------------------------------------

def random_graph(rng: np.random.Generator, n: int, p: float, gid: str = "g") -> Graph:
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Graph(gid, n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())))


def random_symmetric(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    return random_graph(rng, n, p).adjacency()


def random_block_diagonal(rng: np.random.Generator, n: int) -> np.ndarray:
    """0/1 matrix made of random connected blocks on a shuffled node order."""
    B = np.zeros((n, n), dtype=np.int64)
    order = rng.permutation(n)
    start = 0
    while start < n:
        size = int(rng.integers(1, n - start + 1))
        nodes = order[start:start + size]
        # random spanning tree plus extra edges keeps each block connected
        for k in range(1, size):
            u, v = nodes[k], nodes[int(rng.integers(k))]
            B[u, v] = B[v, u] = 1
        for a in range(size):
            for b in range(a + 1, size):
                if rng.random() < 0.3:
                    B[nodes[a], nodes[b]] = B[nodes[b], nodes[a]] = 1
        start += size
    return B


def random_pair_batch(rng: np.random.Generator, count: int, n_lo: int = 3, n_hi: int = 6,
                      p: float = 0.5, N: int | None = None) -> tuple[list[Graph], list[Graph], int]:
    qs = [random_graph(rng, int(rng.integers(n_lo, n_hi + 1)), p, f"q{i}") for i in range(count)]
    cs = [random_graph(rng, int(rng.integers(n_lo, n_hi + 1)), p, f"c{i}") for i in range(count)]
    return qs, cs, N or n_hi


def relabel_random(rng: np.random.Generator, g: Graph) -> Graph:
    return g.relabel(rng.permutation(g.num_nodes).tolist())


def _timed(fn):
    def wrapper(*args, **kwargs):
        t = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---- gossip -----------------------------------------------------------------

@_timed
def check_gossip_exact(trials: int = 200, seed: int = 0, max_n: int = 12) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(trials):
        n = int(rng.integers(1, max_n + 1))
        B = random_symmetric(rng, n, float(rng.uniform(0.05, 0.5)))
        ok += exact_gossip(B, n) == largest_cc(B)
    return CheckResult("gossip", "exact_gossip_equals_lcc", ok, trials)


@_timed
def check_gossip_neural_limit(trials: int = 50, seed: int = 0, max_n: int = 12, lam: float = 1e-3,
                              tol: float = 0.05) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok, worst = 0, 0.0
    for _ in range(trials):
        n = int(rng.integers(2, max_n + 1))
        B = random_block_diagonal(rng, n)
        with ad.no_grad():
            s = float(gossip_tail(B.astype(np.float64), n, lam, tau=0.0).value[0])
        err = abs(s - largest_cc(B))
        worst = max(worst, err)
        ok += err < tol
    return CheckResult("gossip", "neural_gossip_limit", ok, trials, f"max_err={worst:.3g}")


# ---- oracle -------------------------------------------------------------------

@_timed
def check_oracle(trials: int = 200, seed: int = 0, max_n: int = 6) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok = 0
    bad = []
    for t in range(trials):
        nq, nc = int(rng.integers(1, max_n + 1)), int(rng.integers(1, max_n + 1))
        q = random_graph(rng, nq, float(rng.uniform(0.2, 0.8)), f"q{t}")
        c = random_graph(rng, nc, float(rng.uniform(0.2, 0.8)), f"c{t}")
        pair = build_padded_pair(q, c)
        same = (exact_mces(pair).value == brute_force_mces(pair).value
                and exact_mccs(pair).value == brute_force_mccs(pair).value)
        ok += same
        if not same:
            bad.append(t)
    return CheckResult("oracle", "branch_and_bound_vs_brute_force", ok, trials,
                       f"failed trials {bad[:5]}" if bad else "")


# ---- sinkhorn -----------------------------------------------------------------

def check_sinkhorn_sums(trials: int = 100, seed: int = 0, max_n: int = 20, tol: float = 1e-3,
                        config: SinkhornConfig | None = None) -> tuple[CheckResult, CheckResult]:
    """Row and column sums of the soft permutation after the configured iterations."""
    config = config or SinkhornConfig()
    rng = np.random.default_rng(seed)
    rows_ok = cols_ok = 0
    worst_col = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, max_n + 1))
        with ad.no_grad():
            P = sinkhorn(rng.normal(size=(n, n)), config).value
        rows_ok += bool(np.all(np.abs(P.sum(axis=1) - 1) <= tol))
        dev = float(np.abs(P.sum(axis=0) - 1).max())
        worst_col = max(worst_col, dev)
        cols_ok += dev <= tol
    return (CheckResult("sinkhorn", "row_sums", rows_ok, trials),
            CheckResult("sinkhorn", "column_sums", cols_ok, trials, f"max_dev={worst_col:.3g}"))


@_timed
def check_sinkhorn_fixed_points(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    cfg = SinkhornConfig()
    with ad.no_grad():
        uniform = np.allclose(sinkhorn(np.zeros((3, 3)), cfg).value, 1 / 3, rtol=0, atol=1e-15)
        diag = float(np.diag(sinkhorn(10 * np.eye(3), cfg).value).min()) >= 0.95
        # dyadic grid, so U + 3 is exact in floating point
        U = np.round(rng.normal(size=(6, 6)) * 1024) / 1024
        shift = np.array_equal(sinkhorn(U, cfg).value, sinkhorn(U + 3.0, cfg).value)
    checks = [uniform, diag, shift]
    return CheckResult("sinkhorn", "fixed_points", sum(checks), len(checks),
                       "zeros->1/N, 10I diagonal>=0.95, shift invariance")


@_timed
def check_hungarian(trials: int = 20, seed: int = 0, samples: int = 1000) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(trials):
        n = int(rng.integers(2, 9))
        P = rng.random((n, n))
        perm = hungarian_round(P)
        best = P[np.arange(n), perm].sum()
        rand = max(P[np.arange(n), rng.permutation(n)].sum() for _ in range(samples))
        ok += best >= rand - 1e-12 and sorted(perm.tolist()) == list(range(n))
    return CheckResult("sinkhorn", "hungarian_dominates_random", ok, trials)


# ---- gradients ------------------------------------------------------------------

def small_model(kind: str, seed: int = 0):
    from .encoder import EncoderConfig
    return build_model(ModelConfig(kind=kind, encoder=EncoderConfig(R=2, node_dim=4, msg_dim=5)), seed=seed)


@_timed
def check_gradients(kind: str, pairs: int = 10, seed: int = 0, tol: float = 1e-4,
                    max_entries: int | None = 12, full_size: bool = False,
                    skip_hinges: bool = True) -> CheckResult:
    """Finite differences on the summed score of ``pairs`` random pairs, per group.

    Stencils that cross a relu/min/max hinge are not scored (see
    :func:`ad.grad_check_report`); their count is reported.
    """
    rng = np.random.default_rng(seed)
    model = build_model(ModelConfig(kind=kind), seed=seed) if full_size else small_model(kind, seed)
    qs, cs, N = random_pair_batch(rng, pairs, 3, 5)
    qb, cb = GraphBatch(qs, N), GraphBatch(cs, N)
    ok, total, worst, checked, straddled = 0, 0, 0.0, 0, 0
    for group, params in model.store.groups.items():
        if not params:
            continue
        rep = ad.grad_check_report(lambda: ad.sum_(model.score(qb, cb)), list(params.values()),
                                   max_entries=max_entries, seed=seed, skip_hinges=skip_hinges)
        worst = max(worst, rep.max_rel_err)
        checked += rep.checked
        straddled += rep.straddled
        total += 1
        ok += rep.checked > 0 and rep.max_rel_err < tol
    return CheckResult("gradcheck", kind, ok, total,
                       f"max_rel_err={worst:.3g} entries={checked} hinge_straddles={straddled}")


# ---- invariants -------------------------------------------------------------------

@_timed
def check_min_rewrite(trials: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(trials):
        n, d = int(rng.integers(2, 12)), int(rng.integers(1, 12))
        H, H2 = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        P = rng.random((n, n))
        PH = P @ H2
        with ad.no_grad():
            lhs = residual(ad.Tensor(H), ad.Tensor(PH)).value
        ok += np.array_equal(lhs, np.maximum(H - PH, 0.0))
    return CheckResult("invariants", "min_rewrite_identity", ok, trials)


@_timed
def check_relabel_invariance(kind: str, trials: int = 50, seed: int = 0, rtol: float = 1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    model = build_model(ModelConfig(kind=kind), seed=seed)
    qs, cs, N = random_pair_batch(rng, trials, 3, 8, 0.4)
    qs2 = [relabel_random(rng, g) for g in qs]
    cs2 = [relabel_random(rng, g) for g in cs]
    with ad.no_grad():
        base = model.score(GraphBatch(qs, N), GraphBatch(cs, N)).value
        moved_c = model.score(GraphBatch(qs, N), GraphBatch(cs2, N)).value
        moved_q = model.score(GraphBatch(qs2, N), GraphBatch(cs, N)).value
    scale = np.maximum(np.abs(base), 1e-12)
    good = (np.abs(moved_c - base) <= rtol * scale) & (np.abs(moved_q - base) <= rtol * scale)
    return CheckResult("invariants", f"relabel_{kind}", int(good.sum()), trials,
                       f"max_rel={float(np.max(np.maximum(np.abs(moved_c - base), np.abs(moved_q - base)) / scale)):.3g}")


@_timed
def check_determinism(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    qs, cs, N = random_pair_batch(rng, 5, 3, 6)
    ok = 0
    for kind in MODEL_KINDS:
        a = build_model(ModelConfig(kind=kind), seed=seed)
        with ad.no_grad():
            s1 = a.score(GraphBatch(qs, N), GraphBatch(cs, N)).value
            s2 = a.score(GraphBatch(qs, N), GraphBatch(cs, N)).value
        ok += np.array_equal(s1, s2)
    return CheckResult("invariants", "bitwise_determinism", ok, len(MODEL_KINDS))


@_timed
def check_metric_monotone(trials: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(trials):
        n = int(rng.integers(2, 30))
        y = rng.integers(0, 6, size=n).astype(float)
        s = rng.normal(size=n)
        t = np.exp(s) * 3 + 1
        ok += kendall_tau(s, y)[0] == kendall_tau(t, y)[0] and pair_rank(s, y)[0] == pair_rank(t, y)[0]
    return CheckResult("invariants", "metrics_monotone_transform", ok, trials)


def run_suite(suite: str, seed: int = 0, quick: bool = False) -> list[CheckResult]:
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; expected one of {SUITES}")
    k = 4 if quick else 1
    if suite == "gossip":
        return [check_gossip_exact(200 // k, seed), check_gossip_neural_limit(50 // k, seed)]
    if suite == "oracle":
        return [check_oracle(200 // k, seed)]
    if suite == "sinkhorn":
        rows, cols = check_sinkhorn_sums(100 // k, seed)
        return [rows, cols, check_sinkhorn_fixed_points(seed), check_hungarian(20 // k, seed)]
    if suite == "gradcheck":
        return [check_gradients(kind, 10 // k, seed) for kind in MODEL_KINDS]
    out = [check_min_rewrite(100 // k, seed)]
    out += [check_relabel_invariance(kind, 50 // k, seed) for kind in MODEL_KINDS]
    out += [check_determinism(seed), check_metric_monotone(100 // k, seed)]
    return out
