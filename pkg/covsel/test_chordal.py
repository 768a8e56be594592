import itertools

import networkx as nx
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from .chordal import (
    ChordalEmbedding,
    Ordering,
    build_clique_tree,
    edge_basis,
    embedding_stats,
    fill_reducing_order,
    is_perfect_elimination,
    minimum_degree_order,
    symbolic_embed,
)
from .errors import ConfigError, PatternError
from .sparse_sym import SparseSymMatrix, band_pattern, build_pattern, full_pattern, is_subpattern


def to_graph(P):
    g = nx.Graph()
    g.add_nodes_from(range(P.n))
    rows, cols = P.edges()
    g.add_edges_from(zip(rows.tolist(), cols.tolist()))
    return g


def random_pattern(n, p, seed):
    g = nx.gnp_random_graph(n, p, seed=seed)
    return build_pattern(n, list(g.edges()))


def embed(P, method="mindeg", amalgamate=0):
    return symbolic_embed(P, fill_reducing_order(P, method), amalgamate)


def test_ordering_validation():
    o = Ordering.from_perm([2, 0, 1])
    assert_array_equal(o.iperm, [1, 2, 0])
    assert o.n == 3
    with pytest.raises(PatternError):
        Ordering.from_perm([0, 0, 1])
    with pytest.raises(PatternError):
        Ordering.from_perm([0, 3, 1])


@pytest.mark.parametrize("method", ["mindeg", "rcm", "natural"])
def test_orderings_are_permutations(method):
    P = random_pattern(25, 0.15, 1)
    o = fill_reducing_order(P, method)
    assert sorted(o.perm.tolist()) == list(range(25))


def test_unknown_ordering():
    with pytest.raises(ConfigError):
        fill_reducing_order(build_pattern(3), "amd")


def test_minimum_degree_breaks_ties_by_index():
    star = build_pattern(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
    assert minimum_degree_order(star).tolist() == [1, 2, 3, 4, 0]


def test_minimum_degree_is_fill_free_on_chordal_input():
    P = band_pattern(12, 3)
    E = embed(P)
    assert E.m == 0
    assert E.Gt == P


def test_cycle_natural_order_adds_one_chord():
    cycle = build_pattern(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    E = embed(cycle, "natural")
    assert E.m == 1
    assert E.added_edges() == [(3, 1)]


@pytest.mark.parametrize("perm", list(itertools.permutations(range(4))))
def test_cycle_every_order_adds_exactly_one_chord(perm):
    cycle = build_pattern(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    E = symbolic_embed(cycle, Ordering.from_perm(list(perm)))
    assert E.m == 1
    assert nx.is_chordal(to_graph(E.Gt))
    (i, j), = E.added_edges()
    assert abs(i - j) == 2


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("method", ["mindeg", "rcm", "natural"])
def test_embedding_is_chordal_supergraph(seed, method):
    P = random_pattern(30, 0.12, seed)
    E = embed(P, method)
    assert is_subpattern(P, E.Gt)
    assert E.m == E.Gt.num_edges - P.num_edges
    assert nx.is_chordal(to_graph(E.Gt))
    assert is_perfect_elimination(E.Gt, E.ordering)
    added = {(int(r), int(c)) for r, c in E.added_edges()}
    assert all(r > c for r, c in added)
    assert not any(P.contains(r, c) for r, c in added)


def test_complete_graph_is_one_clique():
    T = build_clique_tree(embed(full_pattern(5)))
    assert T.num_cliques == 1
    assert sorted(T.clique(0).tolist()) == [0, 1, 2, 3, 4]
    assert T.max_clique_size == 5


def test_path_gives_chain_of_edges():
    path = build_pattern(4, [(0, 1), (1, 2), (2, 3)])
    T = build_clique_tree(embed(path, "natural"))
    assert T.num_cliques == 3
    assert sorted(sorted(c.tolist()) for c in T.cliques()) == [[0, 1], [1, 2], [2, 3]]
    roots = [k for k in range(T.num_cliques) if T.snpar[k] < 0]
    assert len(roots) == 1


def test_cycle_with_chord_gives_two_triangles():
    P = build_pattern(4, [(0, 1), (1, 2), (2, 3), (3, 0), (1, 3)])
    E = embed(P)
    assert E.m == 0
    T = build_clique_tree(E)
    assert sorted(sorted(c.tolist()) for c in T.cliques()) == [[0, 1, 3], [1, 2, 3]]
    child = [k for k in range(2) if T.snpar[k] >= 0][0]
    assert sorted(T.separator(child).tolist()) == [1, 3]


@pytest.mark.parametrize("seed", range(10))
def test_cliques_match_networkx(seed):
    P = random_pattern(25, 0.15, seed)
    E = embed(P)
    T = build_clique_tree(E)
    ours = sorted(tuple(sorted(c.tolist())) for c in T.cliques())
    theirs = sorted(tuple(sorted(c)) for c in nx.find_cliques(to_graph(E.Gt)))
    assert ours == theirs
    assert T.has_running_intersection()
    # children come before parents
    for k in range(T.num_cliques):
        assert T.snpar[k] < 0 or T.snpar[k] > k
    # separators sit inside the parent clique
    for k in range(T.num_cliques):
        if T.snpar[k] >= 0:
            assert set(T.separator(k).tolist()) <= set(T.clique(T.snpar[k]).tolist())


def test_clique_tree_covers_every_entry():
    P = random_pattern(20, 0.2, 4)
    T = build_clique_tree(embed(P))
    cover = np.zeros((20, 20), dtype=bool)
    for c in T.cliques():
        cover[np.ix_(c, c)] = True
    assert cover[T.pattern.to_mask()].all()


def test_gather_scatter_preserves_values():
    P = random_pattern(18, 0.2, 2)
    T = build_clique_tree(embed(P))
    vals = np.random.default_rng(0).standard_normal(T.pattern.nnz)
    M = SparseSymMatrix(T.pattern, vals)
    buf = T.gather(M)
    assert_array_equal(T.scatter(buf).values, vals)
    for k in range(T.num_cliques):
        assert T.block(buf, k).shape == (T.clique(k).size, T.width(k))
    with pytest.raises(PatternError):
        T.gather(SparseSymMatrix(build_pattern(18), np.ones(18)))


def test_nonchordal_pattern_is_rejected():
    cycle = build_pattern(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    fake = ChordalEmbedding(cycle, cycle, Ordering.identity(4), np.full(4, -1), np.zeros(0, int), np.zeros(0, int))
    with pytest.raises(PatternError):
        build_clique_tree(fake)


def test_ordering_length_must_match():
    with pytest.raises(PatternError):
        symbolic_embed(build_pattern(4), Ordering.identity(3))


def test_amalgamation_adds_fill_but_stays_chordal():
    P = random_pattern(40, 0.08, 11)
    plain = embed(P)
    merged = embed(P, amalgamate=8)
    assert is_subpattern(plain.Gt, merged.Gt)
    assert merged.m >= plain.m
    assert nx.is_chordal(to_graph(merged.Gt))
    T = build_clique_tree(merged)
    assert T.has_running_intersection()
    assert T.num_cliques <= build_clique_tree(plain).num_cliques


def test_edge_basis_is_orthonormal():
    P = build_pattern(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)])
    E = embed(P, "natural")
    B = edge_basis(E)
    assert B.m == E.m > 0
    y = np.random.default_rng(1).standard_normal(B.m)
    Ay = B.apply(y)
    assert_allclose(B.adjoint(Ay), y, atol=1e-14)
    assert_allclose(np.linalg.norm(Ay.to_dense()), np.linalg.norm(y), rtol=1e-14)
    assert_allclose(B.adjoint_dense(Ay.to_dense()), y, atol=1e-14)
    dense = sum(y[e] * B.basis_matrix(e) for e in range(B.m))
    assert_allclose(dense, Ay.to_dense(), atol=1e-14)
    # Ay vanishes on the original pattern
    assert_array_equal(Ay.to_dense()[P.to_mask()], 0.0)


def test_embedding_stats():
    P = build_pattern(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    E = embed(P, "natural")
    stats = embedding_stats(E, build_clique_tree(E))
    assert stats["n"] == 4 and stats["edges_G"] == 4 and stats["edges_Gt"] == 5
    assert stats["m"] == 1 and stats["m_over_n"] == 0.25
    assert stats["cliques"] == 2 and stats["max_clique"] == 3
