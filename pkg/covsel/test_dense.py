import networkx as nx
import numpy as np
import pytest
from numpy.testing import assert_allclose

from .dense import (
    as_mask,
    dense_hess_f,
    dense_hess_fstar,
    dense_logdet_primal,
    dense_maxdet_completion,
    dense_projected_inverse,
    gl_objective,
    gl_reference_solve,
    inverse,
    is_positive_definite,
    logdet,
    pattern_hessian,
)
from .errors import NotCompletableError, NotPositiveDefiniteError, OracleError, PatternError
from .sparse_sym import build_pattern, project


def random_spd(n, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    return scale * (A @ A.T) / n + np.eye(n)


def path_matrix(a, b):
    return np.array([[1.0, a, 0.0], [a, 1.0, b], [0.0, b, 1.0]])


PATH = build_pattern(3, [(0, 1), (1, 2)])


def test_basic_pd_helpers():
    M = random_spd(5, 0)
    assert logdet(M) == pytest.approx(np.linalg.slogdet(M)[1])
    assert_allclose(inverse(M) @ M, np.eye(5), atol=1e-12)
    assert is_positive_definite(M)
    assert not is_positive_definite(-M)
    with pytest.raises(NotPositiveDefiniteError) as info:
        logdet(-M)
    assert info.value.clique == -1


def test_as_mask_symmetrizes_and_sets_diagonal():
    raw = np.zeros((3, 3), dtype=bool)
    raw[2, 0] = True
    mask = as_mask(raw, 3)
    assert mask[0, 2] and mask[2, 0] and mask.diagonal().all()
    with pytest.raises(PatternError):
        as_mask(raw, 4)
    with pytest.raises(PatternError):
        as_mask(build_pattern(4), 3)


def test_pattern_hessian_matches_trace_formula():
    W = random_spd(4, 1)
    P = build_pattern(4, [(1, 0), (3, 2), (3, 0)])
    H = pattern_hessian(W, P.rows, P.cols)
    units = []
    for i, j in zip(P.rows, P.cols):
        E = np.zeros((4, 4))
        E[i, j] = E[j, i] = 1.0
        units.append(E)
    brute = np.array([[np.trace(W @ Ea @ W @ Eb) for Eb in units] for Ea in units])
    assert_allclose(H, brute, rtol=1e-12)


def test_hess_fstar_inverts_hess_f():
    X = random_spd(6, 2)
    P = build_pattern(6, [(1, 0), (2, 1), (5, 4), (5, 0)])
    rng = np.random.default_rng(3)
    Y = project(rng.standard_normal((6, 6)) + rng.standard_normal((6, 6)).T, P)
    Z = dense_hess_fstar(X, Y, P)
    back = dense_hess_f(X, Z, P)
    assert_allclose(back.values, Y.values, atol=1e-10)


def test_projected_inverse():
    X = random_spd(5, 4)
    P = build_pattern(5, [(1, 0), (4, 3)])
    Pi = dense_projected_inverse(X, P)
    W = np.linalg.inv(X)
    assert_allclose(Pi.to_dense()[P.to_mask()], W[P.to_mask()], rtol=1e-12)


def test_path_completion_closed_form():
    S = path_matrix(0.5, 0.5)
    W = dense_maxdet_completion(S, PATH)
    assert W[0, 2] == pytest.approx(0.25, abs=1e-12)
    assert abs(np.linalg.inv(W)[0, 2]) < 1e-12
    # specified entries are untouched
    assert W[0, 1] == 0.5 and W[1, 2] == 0.5 and W[1, 1] == 1.0


@pytest.mark.parametrize("a, b", [(0.3, -0.7), (-0.9, -0.2), (0.6, 0.6)])
def test_path_completion_product_rule(a, b):
    W = dense_maxdet_completion(path_matrix(a, b), PATH)
    assert W[0, 2] == pytest.approx(a * b, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_completion_inverse_vanishes_off_pattern(seed):
    n = 12
    g = nx.gnp_random_graph(n, 0.3, seed=seed)
    P = build_pattern(n, list(g.edges()))
    S = random_spd(n, seed, scale=0.5)
    W = dense_maxdet_completion(S, P)
    mask = P.to_mask()
    assert_allclose(W[mask], S[mask], rtol=0, atol=0)
    K = np.linalg.inv(W)
    assert np.abs(K[~mask]).max() < 1e-9


def test_completion_with_non_pd_start_uses_primal_warm_start():
    # zero fill of this chain is indefinite, but a PD completion exists
    n = 6
    S = np.eye(n)
    for i in range(n - 1):
        S[i, i + 1] = S[i + 1, i] = 0.7
    P = build_pattern(n, [(i + 1, i) for i in range(n - 1)])
    assert not is_positive_definite(S)
    W = dense_maxdet_completion(S, P)
    assert is_positive_definite(W)
    assert W[0, 2] == pytest.approx(0.49, abs=1e-10)
    assert abs(np.linalg.inv(W)[0, 5]) < 1e-9


def test_dense_logdet_primal_matches_completion():
    S = path_matrix(0.4, -0.3)
    X = dense_logdet_primal(S, PATH.to_mask())
    assert X[0, 2] == 0.0
    assert_allclose(np.linalg.inv(X)[PATH.to_mask()], S[PATH.to_mask()], atol=1e-10)


def test_uncompletable_cycle():
    S = np.eye(4)
    for i, j, v in [(0, 1, 0.9), (1, 2, 0.9), (2, 3, 0.9), (3, 0, -0.9)]:
        S[i, j] = S[j, i] = v
    cycle = build_pattern(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    with pytest.raises(NotCompletableError):
        dense_maxdet_completion(S, cycle)


def test_fully_specified_indefinite_matrix():
    S = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotCompletableError):
        dense_maxdet_completion(S, build_pattern(2, [(0, 1)]))


def test_dense_limit_is_enforced():
    with pytest.raises(OracleError):
        dense_maxdet_completion(np.eye(5), build_pattern(5), limit=3)
    with pytest.raises(OracleError):
        gl_reference_solve(np.eye(5), 0.1, limit=3)


def test_gl_objective():
    X = np.array([[2.0, -0.5], [-0.5, 1.0]])
    C = np.array([[1.0, 0.2], [0.2, 1.5]])
    expected = np.sum(C * X) - np.log(np.linalg.det(X)) + 0.3 * 2 * 0.5
    assert gl_objective(X, C, 0.3) == pytest.approx(expected, rel=1e-12)


def test_gl_reference_large_penalty_gives_diagonal():
    C = random_spd(6, 5)
    lam = np.abs(C - np.diag(np.diag(C))).max() * 1.01
    res = gl_reference_solve(C, lam)
    assert_allclose(res.X, np.diag(1.0 / np.diag(C)), atol=1e-8)
    assert res.residual <= 1e-9


def test_gl_reference_zero_penalty_gives_inverse():
    C = random_spd(5, 6)
    res = gl_reference_solve(C, 0.0)
    assert_allclose(res.X, np.linalg.inv(C), atol=1e-7)


def test_gl_reference_respects_prior():
    C = random_spd(5, 7)
    H = build_pattern(5, [(1, 0), (2, 1)])
    res = gl_reference_solve(C, 0.01, H)
    assert np.all(res.X[~H.to_mask()] == 0.0)
