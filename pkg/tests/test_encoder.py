import numpy as np
import pytest

from conftest import path
from mcsnet import autodiff as ad
from mcsnet.autodiff import ParameterStore, Tensor
from mcsnet.checks import random_graph
from mcsnet.encoder import EncoderConfig, GraphBatch, GraphEncoder, encode_graph
from mcsnet.graph import Graph


def make(seed=0, cross=False, **cfg):
    store = ParameterStore(seed=seed)
    return store, GraphEncoder(store, EncoderConfig(**cfg), cross_input=cross)


def test_features_identical_rows():
    _, enc = make()
    H0 = enc.features(GraphBatch([path(4)], 4)).value[0]
    assert np.all(H0 == H0[0])


def test_zero_feature_weights_give_zero():
    _, enc = make()
    enc.feat_W.value[:] = 0
    enc.feat_b.value[:] = 0
    assert not enc.features(GraphBatch([path(3)], 3)).value.any()


def test_feature_gradient_counts_nodes():
    _, enc = make()
    batch = GraphBatch([path(5)], 5)
    ad.backward(ad.sum_(enc.features(batch)))
    assert np.array_equal(enc.feat_W.grad, np.full((1, 10), 5.0))
    assert ad.grad_check(lambda: ad.sum_(enc.features(batch)), [enc.feat_W]) < 1e-7


def test_isolated_node_gets_zero_messages():
    _, enc = make()
    batch = GraphBatch([Graph("g", 3, ((0, 1),))], 3)
    H = enc.features(batch)
    agg = enc.aggregate(H, batch).value[0]
    assert not agg[2].any()
    upd = enc.step(H, batch).value[0, 2]
    direct = enc.gru(Tensor(np.zeros((1, 20))), Tensor(H.value[0, 2:3])).value[0]
    assert np.allclose(upd, direct, rtol=0, atol=1e-15)


def test_aggregate_is_sum_of_incoming_messages(rng):
    _, enc = make()
    g = random_graph(rng, 6, 0.5)
    batch = GraphBatch([g], 6)
    H = Tensor(rng.normal(size=(1, 6, 10)))
    agg = enc.aggregate(H, batch).value[0]
    Ws, Wd, b = enc.msg_src.value, enc.msg_dst.value, enc.msg_b.value
    h = H.value[0]
    for u in range(6):
        expect = sum((h[v] @ Ws + h[u] @ Wd + b for v in g.neighbors()[u]), np.zeros(20))
        assert np.allclose(agg[u], expect, rtol=0, atol=1e-12)


def test_equivariance(rng):
    _, enc = make()
    for _ in range(10):
        g = random_graph(rng, 7, 0.4)
        perm = rng.permutation(7)
        a = encode_graph(g, enc)[0]
        b = encode_graph(g.relabel(perm.tolist()), enc)[0]
        for ha, hb in zip(a, b):
            assert np.allclose(hb.value[perm], ha.value, rtol=0, atol=1e-14)


def test_path_automorphism():
    _, enc = make()
    layers, _ = encode_graph(path(4), enc)
    for H in layers:
        h = H.value
        assert np.allclose(h[0], h[3], atol=1e-14) and np.allclose(h[1], h[2], atol=1e-14)


def test_stack_depth_and_edge_rows(rng):
    _, enc = make(R=3)
    g = random_graph(rng, 6, 0.5)
    layers, edges = encode_graph(g, enc)
    assert len(layers) == 3
    assert edges.M.shape == (2 * g.num_edges, 20)


def test_cross_hook_absent_equals_zero_hook(rng):
    _, enc = make(cross=True)
    batch = GraphBatch([random_graph(rng, 5, 0.5)], 5)
    a = enc.encode(batch)
    b = enc.encode(batch, lambda r, H: Tensor(np.zeros(H.shape[:-1] + (1,))))
    assert all(np.array_equal(x.value, y.value) for x, y in zip(a, b))


def test_cross_requires_flag(rng):
    _, enc = make()
    batch = GraphBatch([path(3)], 3)
    with pytest.raises(ValueError):
        enc.encode(batch, lambda r, H: Tensor(np.zeros(H.shape[:-1] + (1,))))


def test_determinism():
    a = encode_graph(path(5), make(seed=4)[1])[0]
    b = encode_graph(path(5), make(seed=4)[1])[0]
    assert all(np.array_equal(x.value, y.value) for x, y in zip(a, b))


def test_theta_gradcheck(rng):
    store, enc = make(R=2, node_dim=4, msg_dim=5)
    batch = GraphBatch([random_graph(rng, 5, 0.5), random_graph(rng, 4, 0.6)], 5)
    w = Tensor(rng.normal(size=(2, 5, 4)))
    f = lambda: ad.sum_(ad.mul(enc.encode(batch)[-1], w))
    assert ad.grad_check(f, store.params(["theta"])) < 1e-4
