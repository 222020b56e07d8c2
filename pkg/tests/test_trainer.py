import math

import numpy as np
import pytest

from mcsnet import trainer as tr
from mcsnet.checks import random_graph
from mcsnet.encoder import EncoderConfig
from mcsnet.oracle import label_pairs
from mcsnet.scorers import build_model
from mcsnet.trainer import PairData, TrainConfig, TrainingError

SMALL = EncoderConfig(node_dim=6, msg_dim=8, R=2)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(7)
    queries = [random_graph(rng, int(rng.integers(3, 6)), 0.5, f"q{i}") for i in range(10)]
    corpus = [random_graph(rng, int(rng.integers(4, 7)), 0.5, f"c{i}") for i in range(6)]
    return PairData.from_records(queries, corpus, label_pairs(queries, corpus))


def small(cfg, seed=0):
    return build_model(cfg.model_config(encoder=SMALL), seed=seed)


def test_split_sizes_and_disjoint():
    items = list(range(500))
    a, b, c = tr.split_queries(items, (0.6, 0.2, 0.2), seed=3)
    assert (len(a), len(b), len(c)) == (300, 100, 100)
    assert sorted(a + b + c) == items
    assert tr.split_queries(items, (0.6, 0.2, 0.2), seed=3) == (a, b, c)
    assert tr.split_queries(items, (0.6, 0.2, 0.2), seed=4) != (a, b, c)


def test_split_everything_to_train():
    a, b, c = tr.split_queries(list(range(7)), (1.0, 0.0, 0.0))
    assert len(a) == 7 and b == [] and c == []


def test_split_remainder_goes_to_train():
    a, b, c = tr.split_queries(list(range(11)), (0.6, 0.2, 0.2))
    assert (len(a), len(b), len(c)) == (7, 2, 2)


def test_bad_config():
    with pytest.raises(ValueError):
        TrainConfig(fractions=(0.5, 0.2, 0.2))
    with pytest.raises(ValueError):
        TrainConfig(model="gnn")
    with pytest.raises(ValueError):
        TrainConfig(patience=0)


def test_missing_label_raises(data):
    partial = PairData(data.queries, data.corpus, {}, data.N)
    with pytest.raises(TrainingError):
        partial.targets([(0, 0)], data.queries, "mces")


def test_early_stopping_with_patience_one(data, monkeypatch):
    vals = iter([5.0, 6.0, 7.0, 8.0])
    monkeypatch.setattr(tr, "validation_mse", lambda *a, **k: next(vals))
    cfg = TrainConfig(patience=1, max_epochs=10, batch_size=32)
    res = tr.train(small(cfg), data, data.queries[:6], data.queries[6:], cfg)
    assert len(res.history) == 2 and res.stopped_early and res.best_epoch == 1


def test_best_state_restored(data, monkeypatch):
    vals = iter([5.0, 3.0, 4.0, 4.5])
    snapshots = []
    cfg = TrainConfig(patience=2, max_epochs=4, batch_size=32)
    m = small(cfg)

    def fake(*a, **k):
        snapshots.append(m.store.state_dict())
        return next(vals)

    monkeypatch.setattr(tr, "validation_mse", fake)
    res = tr.train(m, data, data.queries[:6], data.queries[6:], cfg)
    assert res.best_epoch == 2 and res.best_val == 3.0
    final = m.store.state_dict()
    assert all(np.array_equal(final[k], snapshots[1][k]) for k in final)


def test_loss_decreases(data):
    cfg = TrainConfig(max_epochs=5, batch_size=16, lr=1e-2)
    res = tr.train(small(cfg), data, data.queries[:6], data.queries[6:], cfg)
    train_curve = [h["train_mse"] for h in res.history]
    assert train_curve[-1] < train_curve[0]


def test_histories_bitwise_reproducible(data, tmp_path):
    cfg = TrainConfig(max_epochs=3, batch_size=16)
    a = tr.train(small(cfg), data, data.queries[:6], data.queries[6:], cfg, tmp_path / "a.tsv")
    b = tr.train(small(cfg), data, data.queries[:6], data.queries[6:], cfg, tmp_path / "b.tsv")
    assert a.history == b.history
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    assert (tmp_path / "a.tsv").read_text().splitlines()[0] == "epoch\ttrain_mse\tval_mse"


def test_best_checkpoint_has_minimum_validation(data):
    cfg = TrainConfig(max_epochs=4, batch_size=16, lr=1e-2)
    m = small(cfg)
    res = tr.train(m, data, data.queries[:6], data.queries[6:], cfg)
    assert res.best_val == min(res.val_curve)
    assert tr.validation_mse(m, data, data.queries[6:], "mces") == pytest.approx(res.best_val, rel=1e-12)


def test_perfect_predictor_zero_mse(data, monkeypatch):
    Y = tr.label_matrix(data, data.queries, "mccs")
    monkeypatch.setattr(tr, "predict", lambda *a, **k: Y.copy())
    assert tr.validation_mse(None, data, data.queries, "mccs") == 0.0


def test_non_finite_loss_aborts(data):
    cfg = TrainConfig(max_epochs=2, batch_size=16)
    m = small(cfg)
    m.store["theta/gnn.feat_b"].value[:] = np.nan
    with pytest.raises(TrainingError, match="non-finite loss"):
        tr.train(m, data, data.queries[:6], data.queries[6:], cfg)


def test_weights_stay_non_negative(data):
    cfg = TrainConfig(max_epochs=3, batch_size=8, lr=0.5)
    m = small(cfg)
    tr.train(m, data, data.queries[:6], data.queries[6:], cfg)
    assert (m.w.value >= 0).all()


def test_tune_lambda_singleton_and_argmin(data):
    cfg = TrainConfig(model="lmccs", target="mccs", max_epochs=2, batch_size=32)
    split = (data.queries[:6], data.queries[6:])
    best, results = tr.tune_lambda(data, *split, cfg, grid=[0.7], model_overrides={"encoder": SMALL})
    assert best == 0.7 and list(results) == [0.7]
    best, results = tr.tune_lambda(data, *split, cfg, grid=[0.3, 3.0], model_overrides={"encoder": SMALL})
    assert results[best].best_val == min(r.best_val for r in results.values())


def test_lambda_defaults():
    assert tr.default_lambda("MM") == 0.7
    assert tr.default_lambda("msrc") == 1.0
    assert tr.default_lambda("unknown") is None and tr.default_lambda(None) is None
    assert min(tr.LAMBDA_GRID) == 0.05 and max(tr.LAMBDA_GRID) == 50


@pytest.mark.parametrize("kind", ["lmccs", "xmcs", "combo", "baseline"])
def test_other_models_train(kind, data):
    cfg = TrainConfig(model=kind, target="mccs" if kind == "lmccs" else "mces", max_epochs=1, batch_size=32)
    res = tr.train(small(cfg), data, data.queries[:6], data.queries[6:], cfg)
    assert math.isfinite(res.best_val)


def test_late_batching_matches_direct_scoring(data):
    cfg = TrainConfig()
    m = small(cfg)
    pairs = [(0, 1), (2, 1), (0, 3)]
    from mcsnet.scorers import score_pairs
    from mcsnet import autodiff as ad
    with ad.no_grad():
        got = tr.batch_scores(m, data.queries, data.corpus, pairs, data.N).value
    want = score_pairs(m, [data.queries[q] for q, _ in pairs], [data.corpus[c] for _, c in pairs], data.N)
    assert np.allclose(got, want, rtol=1e-13, atol=0)
