"""Per-query ranking metrics (MSE, Kendall tau, PairRank) with standard errors,
plus ranked retrieval over a corpus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .encoder import GraphBatch
from .graph import Graph
from .scorers import Embedding, MCSModel


def _pair_signs(x: np.ndarray) -> np.ndarray:
    """sign(x_j - x_i) over the upper triangle i < j."""
    x = np.asarray(x, dtype=np.float64)
    i, j = np.triu_indices(len(x), 1)
    return np.sign(x[j] - x[i])


def mse(scores, labels) -> float:
    s, y = np.asarray(scores, dtype=np.float64), np.asarray(labels, dtype=np.float64)
    return float(np.mean((y - s) ** 2))


def kendall_tau(scores, labels, variant: str = "b") -> tuple[float, bool]:
    """Kendall correlation of one query's ranking; returns ``(tau, defined)``.

    Variant ``b`` divides by ``sqrt((n0 - t_y)(n0 - t_s))``; variant ``a``
    divides by ``n0 = C(n, 2)``. An undefined value (zero denominator) is
    reported as 0 with ``defined=False``.
    """
    if variant not in ("a", "b"):
        raise ValueError(f"tau variant must be 'a' or 'b', got {variant!r}")
    ss, sy = _pair_signs(scores), _pair_signs(labels)
    n0 = ss.size
    prod = ss * sy
    num = int(np.count_nonzero(prod > 0)) - int(np.count_nonzero(prod < 0))
    if variant == "a":
        denom = float(n0)
    else:
        denom = math.sqrt(float(np.count_nonzero(sy)) * float(np.count_nonzero(ss)))
    if denom == 0:
        return 0.0, False
    return num / denom, True


def kendall_tau_b(scores, labels) -> float:
    return kendall_tau(scores, labels, "b")[0]


def pair_rank(scores, labels) -> tuple[float, bool]:
    """Fraction of label-distinct pairs whose scores are strictly in the same order."""
    ss, sy = _pair_signs(scores), _pair_signs(labels)
    denom = int(np.count_nonzero(sy))
    if denom == 0:
        return 0.0, False
    return int(np.count_nonzero(ss * sy > 0)) / denom, True


@dataclass
class MetricReport:
    query_ids: list[str]
    mse: np.ndarray
    ktau: np.ndarray
    pairrank: np.ndarray
    undefined: list[str] = field(default_factory=list)
    tau_variant: str = "b"

    @staticmethod
    def _mean_se(x: np.ndarray) -> tuple[float, float]:
        if len(x) == 0:
            return float("nan"), float("nan")
        se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
        return float(np.mean(x)), se

    def summary(self) -> dict[str, tuple[float, float]]:
        return {"mse": self._mean_se(self.mse), "ktau": self._mean_se(self.ktau),
                "pairrank": self._mean_se(self.pairrank)}

    def write(self, path: str | Path) -> None:
        lines = ["metric\tmean\tse"]
        for name, (m, se) in self.summary().items():
            lines.append(f"{name}\t{m!r}\t{se!r}")
        lines.append("query_id\tmse\tktau\tpairrank")
        for k, q in enumerate(self.query_ids):
            lines.append(f"{q}\t{float(self.mse[k])!r}\t{float(self.ktau[k])!r}\t{float(self.pairrank[k])!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def evaluate(scores: np.ndarray, labels: np.ndarray, query_ids: Sequence[str], tau_variant: str = "b") -> MetricReport:
    """Metrics from ``(|Q|, |C|)`` score and label matrices."""
    scores, labels = np.asarray(scores, dtype=np.float64), np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ValueError(f"score/label shapes differ or are not 2-D: {scores.shape} vs {labels.shape}")
    m, kt, pr, bad = [], [], [], []
    for k, q in enumerate(query_ids):
        m.append(mse(scores[k], labels[k]))
        t, ok_t = kendall_tau(scores[k], labels[k], tau_variant)
        p, ok_p = pair_rank(scores[k], labels[k])
        kt.append(t)
        pr.append(p)
        if not (ok_t and ok_p):
            bad.append(q)
    return MetricReport(list(query_ids), np.array(m), np.array(kt), np.array(pr), bad, tau_variant)


class CorpusIndex:
    """Corpus encoded once; late-interaction models reuse the embeddings per query."""

    def __init__(self, model: MCSModel, corpus: Sequence[Graph], N: int):
        self.model = model
        self.corpus = list(corpus)
        self.N = N
        self.batch = GraphBatch(self.corpus, N, model.dtype)
        self.embedding: Embedding | None = None
        if model.late:
            with ad.no_grad():
                self.embedding = model.embed(self.batch)

    def scores(self, query: Graph) -> np.ndarray:
        n = len(self.corpus)
        qb = GraphBatch([query] * n, self.N, self.model.dtype)
        with ad.no_grad():
            if self.embedding is not None:
                eq = self.model.embed(GraphBatch([query], self.N, self.model.dtype)).take(np.zeros(n, dtype=np.int64))
                return self.model.interact(eq, self.embedding, qb, self.batch).value.copy()
            return self.model.score(qb, self.batch).value.copy()


    def score_queries(self, queries: Sequence[Graph], chunk: int = 512) -> np.ndarray:
        """``(|Q|, |C|)`` scores; each query is encoded once and pairs are
        interacted in chunks."""
        if self.embedding is None:
            return np.stack([self.scores(q) for q in queries]) if queries else np.zeros((0, len(self.corpus)))
        n = len(self.corpus)
        qbatch = GraphBatch(list(queries), self.N, self.model.dtype)
        out = np.empty(len(queries) * n)
        with ad.no_grad():
            eq_all = self.model.embed(qbatch)
            for s in range(0, out.size, chunk):
                flat = np.arange(s, min(s + chunk, out.size))
                qi, ci = flat // n, flat % n
                qb = GraphBatch([queries[i] for i in qi], self.N, self.model.dtype)
                cb = GraphBatch([self.corpus[i] for i in ci], self.N, self.model.dtype)
                out[flat] = self.model.interact(eq_all.take(qi), self.embedding.take(ci), qb, cb).value
        return out.reshape(len(queries), n)


def rank(corpus_ids: Sequence[str], scores: Sequence[float], k: int | None = None) -> list[tuple[str, float]]:
    """Descending by score, ties broken by corpus id."""
    order = sorted(range(len(corpus_ids)), key=lambda i: (-float(scores[i]), corpus_ids[i]))
    if k is not None:
        order = order[:k]
    return [(corpus_ids[i], float(scores[i])) for i in order]


def rank_corpus(query: Graph, index: CorpusIndex, k: int | None = None) -> list[tuple[str, float]]:
    return rank([g.id for g in index.corpus], index.scores(query), k)


def write_ranking(path: str | Path, query_id: str, ranking: Sequence[tuple[str, float]]) -> None:
    lines = [f"{query_id}\t{r}\t{cid}\t{s!r}" for r, (cid, s) in enumerate(ranking, start=1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_scores(path: str | Path, query_ids, corpus_ids, model_kind: str, S: np.ndarray) -> None:
    lines = [f"{q}\t{c}\t{model_kind}\t{float(S[i, j])!r}"
             for i, q in enumerate(query_ids) for j, c in enumerate(corpus_ids)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
