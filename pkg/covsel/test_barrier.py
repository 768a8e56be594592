import networkx as nx
import numpy as np
import pytest
from numpy.testing import assert_allclose

from .barrier import (
    complete_factor,
    f_primal,
    f_star,
    factor_primal,
    gradient_primal,
    hess_f_mvp,
    hess_fstar_mvp,
    primal_matrix,
    projected_inverse,
)
from .bench import gen_precision
from .chordal import build_clique_tree, fill_reducing_order, symbolic_embed
from .dense import dense_hess_f, dense_hess_fstar, dense_maxdet_completion, dense_projected_inverse
from .errors import NotCompletableError, NotPositiveDefiniteError
from .sparse_sym import build_pattern, project


def make_tree(n, p, seed, method="mindeg", amalgamate=0):
    g = nx.gnp_random_graph(n, p, seed=seed)
    G = build_pattern(n, list(g.edges()))
    E = symbolic_embed(G, fill_reducing_order(G, method), amalgamate)
    return build_clique_tree(E)


def pd_on_pattern(P, seed):
    """Diagonally dominant matrix supported on P."""
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, (P.n, P.n))
    A = np.where(P.to_mask(), A + A.T, 0.0)
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, np.abs(A).sum(axis=1) + 1.0)
    return project(A, P)


def sym_on_pattern(P, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((P.n, P.n))
    return project(A + A.T, P)


CASES = [(15, 0.2, 0), (20, 0.15, 1), (25, 0.1, 2), (12, 0.5, 3)]


@pytest.mark.parametrize("n, p, seed", CASES)
def test_factor_matches_dense(n, p, seed):
    tree = make_tree(n, p, seed)
    X = pd_on_pattern(tree.pattern, seed)
    value, F = f_primal(X, tree)
    D = X.to_dense()
    assert value == pytest.approx(-np.linalg.slogdet(D)[1], rel=1e-12)
    L = F.to_scipy().toarray()
    perm = tree.perm
    assert_allclose(L @ L.T, D[np.ix_(perm, perm)], atol=1e-12)


@pytest.mark.parametrize("n, p, seed", CASES)
def test_projected_inverse_matches_dense(n, p, seed):
    tree = make_tree(n, p, seed)
    X = pd_on_pattern(tree.pattern, seed)
    F = factor_primal(X, tree)
    ours = projected_inverse(F)
    ref = dense_projected_inverse(X, tree.pattern)
    assert ours.pattern == tree.pattern
    assert_allclose(ours.values, ref.values, atol=1e-12)
    assert_allclose(gradient_primal(F).values, -ref.values, atol=1e-12)


@pytest.mark.parametrize("n, p, seed", CASES)
def test_hess_f_matches_dense(n, p, seed):
    tree = make_tree(n, p, seed)
    X = pd_on_pattern(tree.pattern, seed)
    dX = sym_on_pattern(tree.pattern, seed + 100)
    ours = hess_f_mvp(factor_primal(X, tree), dX)
    ref = dense_hess_f(X, dX, tree.pattern)
    assert_allclose(ours.values, ref.values, atol=1e-11)


@pytest.mark.parametrize("n, p, seed", CASES)
def test_completion_factor_inverts_projected_inverse(n, p, seed):
    tree = make_tree(n, p, seed)
    X = pd_on_pattern(tree.pattern, seed)
    S = projected_inverse(factor_primal(X, tree))
    value, F = f_star(S, tree)
    assert value == pytest.approx(n + np.linalg.slogdet(X.to_dense())[1], rel=1e-11)
    assert_allclose(primal_matrix(F).values, X.values, atol=1e-10)


@pytest.mark.parametrize("n, p, seed", CASES)
def test_completion_factor_matches_maxdet_completion(n, p, seed):
    tree = make_tree(n, p, seed)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, 3 * n))
    S = project(A @ A.T / (3 * n), tree.pattern)
    F = complete_factor(S, tree)
    W = np.linalg.inv(primal_matrix(F).to_dense())
    ref = dense_maxdet_completion(S, tree.pattern)
    assert_allclose(W, ref, atol=1e-9)


@pytest.mark.parametrize("n, p, seed", CASES)
def test_hess_fstar_matches_dense(n, p, seed):
    tree = make_tree(n, p, seed)
    X = pd_on_pattern(tree.pattern, seed)
    dS = sym_on_pattern(tree.pattern, seed + 200)
    S = projected_inverse(factor_primal(X, tree))
    ref = dense_hess_fstar(X, dS, tree.pattern)
    from_completion = hess_fstar_mvp(complete_factor(S, tree), dS)
    from_primal = hess_fstar_mvp(factor_primal(X, tree), dS)
    assert_allclose(from_completion.values, ref.values, atol=1e-9)
    assert_allclose(from_primal.values, ref.values, atol=1e-9)


def test_hess_fstar_inverts_hess_f():
    tree = make_tree(30, 0.1, 7, amalgamate=4)
    X = pd_on_pattern(tree.pattern, 7)
    F = factor_primal(X, tree)
    dS = sym_on_pattern(tree.pattern, 8)
    back = hess_f_mvp(F, hess_fstar_mvp(F, dS))
    assert_allclose(back.values, dS.values, atol=1e-10)


def test_natural_order_tree():
    tree = make_tree(18, 0.2, 5, method="natural")
    X = pd_on_pattern(tree.pattern, 5)
    F = factor_primal(X, tree)
    ref = dense_projected_inverse(X, tree.pattern)
    assert_allclose(projected_inverse(F).values, ref.values, atol=1e-12)


def test_factor_reports_failing_clique():
    tree = make_tree(10, 0.3, 4)
    X = pd_on_pattern(tree.pattern, 4)
    bad = X.with_values(-X.values)
    with pytest.raises(NotPositiveDefiniteError) as info:
        factor_primal(bad, tree)
    assert 0 <= info.value.clique < tree.num_cliques


def test_completion_reports_failing_clique():
    path = build_pattern(3, [(0, 1), (1, 2)])
    E = symbolic_embed(path, fill_reducing_order(path, "natural"))
    tree = build_clique_tree(E)
    S = project(np.array([[1.0, 1.5, 0.0], [1.5, 1.0, 0.2], [0.0, 0.2, 1.0]]), tree.pattern)
    with pytest.raises(NotCompletableError) as info:
        complete_factor(S, tree)
    assert 0 <= info.value.clique < tree.num_cliques


def random_chordal_tree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 41))
    p = float(rng.uniform(0.05, 0.3))
    method = ("mindeg", "rcm", "natural")[seed % 3]
    return make_tree(n, p, seed, method=method, amalgamate=4 * (seed % 2))


@pytest.mark.parametrize("seed", range(200))
def test_completion_barrier_matches_dense_on_random_chordal_patterns(seed):
    tree = random_chordal_tree(seed)
    P = tree.pattern
    X = project(gen_precision(P, seed), P)
    S = dense_projected_inverse(X, P)
    value, F = f_star(S, tree)
    assert value == pytest.approx(P.n + np.linalg.slogdet(X.to_dense())[1], rel=1e-8)

    scale = np.abs(X.values).max()
    assert_allclose(primal_matrix(F).values, X.values, rtol=1e-8, atol=1e-8 * scale)

    dS = sym_on_pattern(P, seed + 300)
    ref = dense_hess_fstar(X, dS, P)
    ours = hess_fstar_mvp(F, dS)
    assert_allclose(ours.values, ref.values, rtol=1e-6, atol=1e-6 * np.abs(ref.values).max())

    if seed % 10 == 0:
        W = dense_maxdet_completion(S, P)
        assert_allclose(np.linalg.inv(W), X.to_dense(), rtol=1e-8, atol=1e-8 * scale)


def test_completion_gradient_central_differences_are_second_order():
    tree = make_tree(20, 0.2, 11)
    X = pd_on_pattern(tree.pattern, 11)
    S = dense_projected_inverse(X, tree.pattern)
    D = sym_on_pattern(tree.pattern, 12)
    D = D.with_values(0.1 * D.values / np.abs(D.values).max())
    _, F = f_star(S, tree)
    exact = -primal_matrix(F).inner(D)

    def error(t):
        up = f_star(S.with_values(S.values + t * D.values), tree)[0]
        down = f_star(S.with_values(S.values - t * D.values), tree)[0]
        return abs((up - down) / (2 * t) - exact)

    ratio = error(1e-3) / error(1e-4)
    assert 70.0 < ratio < 130.0
