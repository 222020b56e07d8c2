import itertools

import numpy as np
import pytest

from conftest import complete, path, star
from mcsnet.checks import random_graph
from mcsnet.graph import Graph
from mcsnet.sampler import (DESK_PROFILE, GenerationError, GenerationReport, IndeterminateError, SamplerConfig,
                            SamplingError, augment_query, bfs_sample, generate_dataset, subgraph_isomorphic,
                            synthetic_sources)
from mcsnet.oracle import largest_cc


def brute_monomorphism(small: Graph, big: Graph) -> bool:
    big_edges = set(big.edges)
    for image in itertools.permutations(range(big.num_nodes), small.num_nodes):
        if all((min(image[u], image[v]), max(image[u], image[v])) in big_edges for u, v in small.edges):
            return True
    return False


def connected(g: Graph) -> bool:
    return largest_cc(g.adjacency()) == g.num_nodes


def test_bfs_single_node():
    g = bfs_sample(path(5), 1, seed=0)
    assert g.num_nodes == 1 and g.num_edges == 0


def test_bfs_clique_gives_clique():
    assert bfs_sample(complete(5), 3, seed=3).num_edges == 3


def test_bfs_path_gives_path(rng):
    for s in range(20):
        g = bfs_sample(path(10), 4, seed=s)
        assert g.num_nodes == 4 and g.num_edges == 3 and connected(g)


def test_bfs_connected_on_random_sources():
    for s, src in enumerate(synthetic_sources(10, seed=5)):
        g = bfs_sample(src, 12, seed=s)
        assert g.num_nodes == 12 and connected(g)


def test_bfs_too_large():
    two = Graph("two", 4, ((0, 1), (2, 3)))
    with pytest.raises(SamplingError):
        bfs_sample(two, 3, seed=0, retries=5)


def test_subgraph_examples():
    assert subgraph_isomorphic(path(3), complete(3))
    assert not subgraph_isomorphic(complete(3), path(4))
    assert subgraph_isomorphic(star(3), complete(4))
    assert not subgraph_isomorphic(path(5), path(4))


def test_subgraph_against_brute_force(rng):
    for _ in range(150):
        small = random_graph(rng, int(rng.integers(1, 5)), 0.5)
        big = random_graph(rng, int(rng.integers(small.num_nodes, 7)), 0.5)
        assert subgraph_isomorphic(small, big) == brute_monomorphism(small, big)


def test_subgraph_budget():
    dense = Graph("big", 12, tuple((i, j) for i in range(12) for j in range(i + 1, 12) if (i + j) % 3))
    with pytest.raises(IndeterminateError):
        subgraph_isomorphic(path(9), dense, time_budget=3)


def test_augment_zero_is_identity():
    cfg = SamplerConfig(augment_nodes=(0, 0))
    g = path(6)
    assert augment_query(g, cfg, seed=1) == g


def test_augment_construction(rng):
    cfg = SamplerConfig()
    for s in range(30):
        g = random_graph(rng, int(rng.integers(3, 10)), 0.3)
        out = augment_query(g, cfg, seed=s)
        k = out.num_nodes - g.num_nodes
        assert 2 <= k <= 5
        deg = out.degrees()
        assert all(deg[u] >= 1 for u in range(g.num_nodes, out.num_nodes))
        assert set(g.edges) <= set(out.edges)
        assert subgraph_isomorphic(g, out)


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(min_nodes=5, max_nodes=4)
    with pytest.raises(ValueError):
        SamplerConfig(eta_range=(0.5, 0.2))


@pytest.fixture(scope="module")
def small_dataset():
    cfg = SamplerConfig(min_nodes=6, max_nodes=8, corpus_count=20, query_count=6, seed=7)
    sources = synthetic_sources(8, seed=7)
    rep = GenerationReport()
    corpus, queries = generate_dataset(sources, cfg, rep)
    return cfg, sources, corpus, queries, rep


def test_generate_sizes_and_ids(small_dataset):
    cfg, _, corpus, queries, _ = small_dataset
    assert [g.id for g in corpus] == [f"c{i}" for i in range(20)]
    assert [g.id for g in queries] == [f"q{i}" for i in range(6)]
    assert all(cfg.min_nodes <= g.num_nodes <= cfg.max_nodes for g in corpus)
    assert all(cfg.min_nodes <= g.num_nodes <= cfg.max_nodes + cfg.augment_nodes[1] for g in queries)


def test_generate_eta_recheck(small_dataset):
    cfg, _, corpus, _, rep = small_dataset
    lo, hi = cfg.eta_range
    for seed_q in rep.seed_queries:
        frac = np.mean([subgraph_isomorphic(seed_q, c, None) for c in corpus])
        assert lo <= frac <= hi


def test_generate_deterministic(small_dataset):
    cfg, sources, corpus, queries, _ = small_dataset
    again = generate_dataset(sources, cfg)
    assert again == (corpus, queries)


def test_generate_unsatisfiable():
    cfg = SamplerConfig(min_nodes=3, max_nodes=3, eta_range=(1.0, 1.0), corpus_count=5, query_count=1,
                        retries=3)
    corpus_src = [complete(3, "k3"), path(4, "p4")]
    with pytest.raises(GenerationError, match="acceptance rate"):
        generate_dataset(corpus_src, cfg)


def test_desk_profile():
    assert (DESK_PROFILE.corpus_count, DESK_PROFILE.query_count) == (100, 50)
    assert (DESK_PROFILE.min_nodes, DESK_PROFILE.max_nodes) == (8, 12)
