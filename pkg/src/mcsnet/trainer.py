"""Supervised MSE training with query splits, minibatches over pairs, early
stopping on validation MSE and temperature selection for LMCCS."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .encoder import GraphBatch
from .graph import Graph, LabelRecord, max_nodes
from .scorers import MODEL_KINDS, MCSModel, ModelConfig, build_model

log = logging.getLogger(__name__)

TARGETS = ("mces", "mccs", "combo")

# best LMCCS temperatures per dataset tag
LAMBDA_DEFAULTS = {"MM": 0.7, "MR": 0.1, "FM": 0.8, "FR": 1.4, "DD": 10.0, "COX2": 1.1, "MSRC": 1.0}
LAMBDA_GRID = (0.05, 0.1, 0.3, 0.7, 1.0, 1.4, 3.0, 10.0, 50.0)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    model: str = "lmces"
    target: str = "mces"
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 5e-4
    patience: int = 50
    max_epochs: int = 500
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    lam: float = 1.0
    lam_grid: tuple[float, ...] = LAMBDA_GRID

    def __post_init__(self):
        self.fractions = tuple(float(x) for x in self.fractions)
        self.lam_grid = tuple(float(x) for x in self.lam_grid)
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}")
        if len(self.fractions) != 3 or min(self.fractions) < 0 or not math.isclose(sum(self.fractions), 1.0):
            raise ValueError(f"split fractions must be three non-negatives summing to 1, got {self.fractions}")
        if self.patience < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("patience, max_epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        d["lam_grid"] = list(self.lam_grid)
        return d

    def model_config(self, **overrides) -> ModelConfig:
        return ModelConfig(kind=self.model, lam=self.lam, **overrides)


@dataclass
class PairData:
    """Queries, shared corpus and the label for every (query, corpus) pair."""
    queries: list[Graph]
    corpus: list[Graph]
    labels: dict[tuple[str, str], LabelRecord]
    N: int = 0

    def __post_init__(self):
        if not self.N:
            self.N = max_nodes(list(self.queries) + list(self.corpus))

    @classmethod
    def from_records(cls, queries, corpus, records: Sequence[LabelRecord], N: int = 0) -> "PairData":
        return cls(list(queries), list(corpus), {(r.query_id, r.corpus_id): r for r in records}, N)

    def targets(self, pairs: Sequence[tuple[int, int]], queries: Sequence[Graph], target: str) -> np.ndarray:
        out = np.empty(len(pairs))
        for k, (qi, ci) in enumerate(pairs):
            key = (queries[qi].id, self.corpus[ci].id)
            if key not in self.labels:
                raise TrainingError(f"no label for pair {key}")
            out[k] = self.labels[key].target(target)
        return out


def split_queries(queries: Sequence, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Shuffle and cut into (train, val, test); val and test sizes are floored
    and the remainder goes to train."""
    if len(fractions) != 3 or not math.isclose(sum(fractions), 1.0):
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    n = len(queries)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    n_test = int(math.floor(fractions[2] * n + 1e-9))
    n_train = n - n_val - n_test
    pick = lambda idx: [queries[i] for i in idx]
    return (pick(order[:n_train]), pick(order[n_train:n_train + n_val]),
            pick(order[n_train + n_val:]))


def all_pairs(num_queries: int, num_corpus: int) -> list[tuple[int, int]]:
    return [(q, c) for q in range(num_queries) for c in range(num_corpus)]


def _unique_index(items: Sequence[int]) -> tuple[list[int], np.ndarray]:
    uniq = sorted(set(items))
    pos = {v: i for i, v in enumerate(uniq)}
    return uniq, np.array([pos[v] for v in items], dtype=np.int64)


def batch_scores(model: MCSModel, queries: Sequence[Graph], corpus: Sequence[Graph],
                 pairs: Sequence[tuple[int, int]], N: int) -> ad.Tensor:
    """Scores for ``pairs`` (indices into queries/corpus).

    Late-interaction models encode each distinct graph once and gather the
    embeddings per pair.
    """
    dtype = model.dtype
    if model.late:
        uq, iq = _unique_index([p[0] for p in pairs])
        uc, ic = _unique_index([p[1] for p in pairs])
        qb_u = GraphBatch([queries[i] for i in uq], N, dtype)
        cb_u = GraphBatch([corpus[i] for i in uc], N, dtype)
        eq, ec = model.embed(qb_u).take(iq), model.embed(cb_u).take(ic)
        qb = GraphBatch([queries[p[0]] for p in pairs], N, dtype)
        cb = GraphBatch([corpus[p[1]] for p in pairs], N, dtype)
        return model.interact(eq, ec, qb, cb)
    qb = GraphBatch([queries[p[0]] for p in pairs], N, dtype)
    cb = GraphBatch([corpus[p[1]] for p in pairs], N, dtype)
    return model.score(qb, cb)


def predict(model: MCSModel, queries: Sequence[Graph], corpus: Sequence[Graph], N: int,
            chunk: int = 512) -> np.ndarray:
    """``(|Q|, |C|)`` score matrix, forward only."""
    pairs = all_pairs(len(queries), len(corpus))
    out = np.empty(len(pairs))
    with ad.no_grad():
        for s in range(0, len(pairs), chunk):
            part = pairs[s:s + chunk]
            out[s:s + len(part)] = batch_scores(model, queries, corpus, part, N).value
    return out.reshape(len(queries), len(corpus))


def label_matrix(data: PairData, queries: Sequence[Graph], target: str) -> np.ndarray:
    return data.targets(all_pairs(len(queries), len(data.corpus)), queries, target).reshape(
        len(queries), len(data.corpus))


def validation_mse(model: MCSModel, data: PairData, queries: Sequence[Graph], target: str) -> float:
    if not queries:
        return float("nan")
    S = predict(model, queries, data.corpus, data.N)
    Y = label_matrix(data, queries, target)
    return float(np.mean(np.mean((S - Y) ** 2, axis=1)))


@dataclass
class TrainResult:
    state: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")
    stopped_early: bool = False

    @property
    def val_curve(self) -> list[float]:
        return [h["val_mse"] for h in self.history]


def write_history(history: list[dict], path: str | Path) -> None:
    lines = ["epoch\ttrain_mse\tval_mse"]
    lines += [f"{h['epoch']}\t{h['train_mse']!r}\t{h['val_mse']!r}" for h in history]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def train(model: MCSModel, data: PairData, train_q: Sequence[Graph], val_q: Sequence[Graph],
          config: TrainConfig, history_path: str | Path | None = None) -> TrainResult:
    """Minimize the batch-mean squared error over shuffled (query, corpus) pairs.

    Validation MSE is measured after every epoch; training stops once it has
    not strictly improved for ``config.patience`` epochs. The returned state is
    the one with the lowest validation MSE.
    """
    rng = np.random.default_rng(config.seed)
    pairs = all_pairs(len(train_q), len(data.corpus))
    if not pairs:
        raise TrainingError("empty training split")
    y_all = data.targets(pairs, train_q, config.target)
    result = TrainResult(state=model.store.state_dict())
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(pairs))
        sq_err, count = 0.0, 0
        for s in range(0, len(order), config.batch_size):
            idx = order[s:s + config.batch_size]
            batch = [pairs[i] for i in idx]
            y = y_all[idx]
            model.store.zero_grad()
            pred = batch_scores(model, train_q, data.corpus, batch, data.N)
            diff = pred - ad.Tensor(y.astype(model.dtype))
            loss = ad.mean(diff * diff)
            if not np.isfinite(loss.value):
                ids = [(train_q[q].id, data.corpus[c].id) for q, c in batch]
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch pairs {ids}")
            ad.backward(loss)
            ad.adam_step(model.store, config.lr, config.weight_decay)
            sq_err += float(loss.value) * len(batch)
            count += len(batch)
        val = validation_mse(model, data, val_q, config.target)
        result.history.append({"epoch": epoch, "train_mse": sq_err / count, "val_mse": val})
        log.info("epoch %d train %.4f val %.4f", epoch, sq_err / count, val)
        if not np.isfinite(val):
            raise TrainingError(f"non-finite validation MSE at epoch {epoch}")
        if val < result.best_val:
            result.best_val, result.best_epoch = val, epoch
            result.state = model.store.state_dict()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                result.stopped_early = True
                break
    model.store.load_state_dict(result.state)
    if history_path is not None:
        write_history(result.history, history_path)
    return result


def default_lambda(tag: str | None) -> float | None:
    return LAMBDA_DEFAULTS.get(tag.upper()) if tag else None


def tune_lambda(data: PairData, train_q, val_q, config: TrainConfig, grid: Sequence[float] | None = None,
                dtype=np.float64, model_overrides: dict | None = None) -> tuple[float, dict[float, TrainResult]]:
    """Train one LMCCS per temperature and keep the lowest validation MSE.

    Ties go to the earlier grid entry.
    """
    grid = tuple(config.lam_grid if grid is None else grid)
    if not grid:
        raise ValueError("empty lambda grid")
    results = {}
    best = None
    for lam in grid:
        cfg = TrainConfig(**{**config.to_dict(), "lam": lam})
        model = build_model(cfg.model_config(**(model_overrides or {})), seed=cfg.seed, dtype=dtype)
        res = train(model, data, train_q, val_q, cfg)
        results[lam] = res
        if best is None or res.best_val < results[best].best_val:
            best = lam
    return best, results
