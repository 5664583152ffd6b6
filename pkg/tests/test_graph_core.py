import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgcs.graph_core import (GFTCache, Graph, all_pairs, eigen_projectors, gft, laplacian,
                             perturb_edges, perturbation_distance, read_edge_list,
                             toggled_pairs, write_edge_list)
from pgcs.graph_models import GraphFamilyConfig, generate


def path_graph(n):
    return Graph.from_pairs(n, [(i, i + 1) for i in range(n - 1)])


@st.composite
def graphs(draw, max_n=9):
    n = draw(st.integers(2, max_n))
    pairs = all_pairs(n)
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Graph.from_pairs(n, [p for p, k in zip(pairs, keep) if k])


def test_graph_rejects_bad_pairs():
    with pytest.raises(ValueError):
        Graph.from_pairs(3, [(1, 1)])
    with pytest.raises(ValueError):
        Graph.from_pairs(3, [(0, 3)])
    g = Graph.from_pairs(3, [(1, 0), (0, 1)])
    assert g.edges == {(0, 1)}


def test_laplacian_small_cases():
    k3 = Graph.from_pairs(3, [(0, 1), (0, 2), (1, 2)])
    assert laplacian(k3).tolist() == [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]]
    assert laplacian(path_graph(2)).tolist() == [[1, -1], [-1, 1]]
    assert np.allclose(np.linalg.eigvalsh(laplacian(k3)), [0, 3, 3])


@given(graphs())
@settings(max_examples=40, deadline=None)
def test_laplacian_matches_networkx(g):
    G = nx.Graph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from(g.edges)
    ref = nx.laplacian_matrix(G, nodelist=range(g.n)).toarray()
    L = laplacian(g)
    assert np.array_equal(L, ref)
    assert np.all(L.sum(axis=1) == 0)


def test_p2_basis():
    b = gft(path_graph(2))
    assert np.allclose(b.values, [0, 2])
    assert np.allclose(b.vectors[:, 0], [1 / np.sqrt(2)] * 2)


@pytest.mark.parametrize("n", [4, 8])
def test_path_spectrum_closed_form(n):
    lam = gft(path_graph(n)).values
    ref = sorted(2 - 2 * np.cos(np.arange(n) * np.pi / n))
    assert np.allclose(lam, ref, atol=1e-12)


def test_grid_spectrum_is_kronecker_sum():
    p3 = 2 - 2 * np.cos(np.arange(3) * np.pi / 3)
    g = Graph.from_pairs(9, [(r * 3 + c, r * 3 + c + 1) for r in range(3) for c in range(2)]
                         + [(r * 3 + c, (r + 1) * 3 + c) for r in range(2) for c in range(3)])
    ref = sorted(a + b for a in p3 for b in p3)
    assert np.allclose(gft(g).values, ref, atol=1e-12)


@given(graphs())
@settings(max_examples=40, deadline=None)
def test_spectral_basis_invariants(g):
    b = gft(g)
    V, lam = b.vectors, b.values
    L = laplacian(g)
    scale = max(1.0, lam[-1])
    assert np.abs(V.T @ V - np.eye(g.n)).max() <= 1e-8
    assert np.abs(L @ V - V * lam).max() <= 1e-6 * scale
    assert abs(lam[0]) <= 1e-8
    assert np.all(np.diff(lam) >= -1e-12)
    assert np.abs(V @ np.diag(lam) @ V.T - L).max() <= 1e-6 * scale


def test_gft_deterministic_and_signs():
    g = generate(GraphFamilyConfig("ER", n=30, p=0.2), 1).graph
    a, b = gft(g), gft(g)
    assert np.array_equal(a.vectors, b.vectors)
    idx = np.argmax(np.abs(a.vectors), axis=0)
    assert np.all(a.vectors[idx, np.arange(30)] > 0)


@given(graphs(max_n=8))
@settings(max_examples=25, deadline=None)
def test_complement_shares_eigenspaces(g):
    Lc = laplacian(g.complement()).astype(float)
    for _, P in eigen_projectors(gft(g)):
        assert np.abs(P @ Lc - Lc @ P).max() <= 1e-6


def test_perturb_examples():
    g = Graph.from_pairs(3, [(0, 1)])
    assert perturb_edges(g, [(0, 1)]).edges == frozenset()
    assert perturb_edges(Graph(3), [(1, 0)]).edges == {(0, 1)}
    with pytest.raises(ValueError):
        perturb_edges(g, [(0, 5)])


@given(graphs(), st.data())
@settings(max_examples=40, deadline=None)
def test_perturb_involution_and_commutation(g, data):
    pairs = all_pairs(g.n)
    a = data.draw(st.sampled_from(pairs))
    b = data.draw(st.sampled_from(pairs))
    assert perturb_edges(perturb_edges(g, [a]), [a]) == g
    assert perturb_edges(g, [a, b]) == perturb_edges(g, [b, a])


def test_perturbation_distance_examples():
    e1 = [(0, 1), (1, 2)]
    e2 = [(2, 3), (3, 4), (0, 4)]
    assert perturbation_distance(e1, e1) == 0
    assert perturbation_distance(e1, e2) == 5


def test_distance_equals_number_of_distinct_toggles_n5():
    g = Graph.from_pairs(5, [(0, 1), (1, 2), (3, 4)])
    pairs = all_pairs(5)
    for d in range(4):
        for combo in itertools.combinations(pairs, d):
            h = perturb_edges(g, combo)
            assert perturbation_distance(g, h) == d
            assert toggled_pairs(g, h) == sorted(combo)


def test_edge_list_round_trip(tmp_path):
    g = Graph.from_pairs(6, [(4, 5), (0, 3), (1, 2)])
    p = tmp_path / "g.txt"
    write_edge_list(g, p)
    assert p.read_text() == "n 6\n0 3\n1 2\n4 5\n"
    assert read_edge_list(p) == g


def test_gft_cache_hits():
    cache = GFTCache()
    g = path_graph(5)
    a = cache.get(g)
    b = cache.get(Graph.from_pairs(5, reversed(g.sorted_edges())))
    assert a is b
    assert (cache.hits, cache.misses) == (1, 1)
