"""
Dense reference computations.

Everything here is O(n^3) or worse and refuses inputs above the dense
limit. These routines share no code with the clique-tree kernels, so
agreement between the two is evidence rather than tautology.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .config import DENSE_LIMIT
from .errors import NotCompletableError, NotPositiveDefiniteError, OracleError, PatternError
from .sparse_sym import SparseSymMatrix, SparsityPattern

log = logging.getLogger(__name__)

MAX_SWEEPS = 100_000
MAX_NEWTON = 200

PatternLike = Union[SparsityPattern, np.ndarray]


def check_dense_size(n: int, limit: int = DENSE_LIMIT) -> None:
    if n > limit:
        raise OracleError(f"dense computation refused: n={n} exceeds the limit {limit}")


def as_dense(M) -> np.ndarray:
    if isinstance(M, SparseSymMatrix):
        return M.to_dense()
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise PatternError(f"expected a square matrix, got shape {M.shape}")
    return M


def as_mask(G: PatternLike, n: int) -> np.ndarray:
    """Boolean symmetric mask with the diagonal set."""
    if isinstance(G, SparsityPattern):
        if G.n != n:
            raise PatternError(f"pattern has n={G.n}, matrix has n={n}")
        return G.to_mask()
    mask = np.asarray(G, dtype=bool)
    if mask.shape != (n, n):
        raise PatternError(f"mask shape {mask.shape} does not match n={n}")
    mask = mask | mask.T
    np.fill_diagonal(mask, True)
    return mask


def cholesky_or_raise(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    try:
        return linalg.cholesky(M, lower=True)
    except linalg.LinAlgError:
        raise NotPositiveDefiniteError(-1, f"{what} is not positive definite")


def logdet(M: np.ndarray) -> float:
    L = cholesky_or_raise(M)
    return float(2.0 * np.log(np.diag(L)).sum())


def inverse(M: np.ndarray) -> np.ndarray:
    L = cholesky_or_raise(M)
    W = linalg.cho_solve((L, True), np.eye(M.shape[0]))
    return 0.5 * (W + W.T)


def is_positive_definite(M: np.ndarray) -> bool:
    try:
        linalg.cholesky(M, lower=True)
    except linalg.LinAlgError:
        return False
    return True


# ------------------------------------------------------------------
# Pattern Hessian of -log det
# ------------------------------------------------------------------

def _entries(mask: np.ndarray):
    r, c = np.nonzero(np.tril(mask))
    return r, c


def pattern_hessian(W: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """
    H[e, f] = tr(W E_e W E_f) for the symmetric unit matrices E_e of the
    listed entries (E_e has ones at (i, j) and (j, i), or a single one on
    the diagonal).
    """
    a, b = rows, cols
    T = (
        W[np.ix_(b, b)] * W[np.ix_(a, a)]
        + W[np.ix_(b, a)] * W[np.ix_(a, b)]
        + W[np.ix_(a, b)] * W[np.ix_(b, a)]
        + W[np.ix_(a, a)] * W[np.ix_(b, b)]
    )
    mult = np.where(a == b, 2.0, 1.0)
    return T / np.outer(mult, mult)


def _coordinates(M: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return M[rows, cols]


def _from_coordinates(z: np.ndarray, rows: np.ndarray, cols: np.ndarray, n: int) -> np.ndarray:
    Z = np.zeros((n, n))
    Z[rows, cols] = z
    Z[cols, rows] = z
    return Z


def dense_projected_inverse(X, P: SparsityPattern) -> SparseSymMatrix:
    """P_P(X^{-1})."""
    X = as_dense(X)
    check_dense_size(X.shape[0])
    return SparseSymMatrix(P, inverse(X)[P.rows, P.cols])


def dense_hess_f(X, Y, P: SparsityPattern) -> SparseSymMatrix:
    """P_P(X^{-1} Y X^{-1})."""
    X, Y = as_dense(X), as_dense(Y)
    check_dense_size(X.shape[0])
    W = inverse(X)
    return SparseSymMatrix(P, (W @ Y @ W)[P.rows, P.cols])


def dense_hess_fstar(X, Y, P: SparsityPattern) -> SparseSymMatrix:
    """Z on P solving P_P(X^{-1} Z X^{-1}) = Y, by a dense solve in entry coordinates."""
    X, Y = as_dense(X), as_dense(Y)
    check_dense_size(X.shape[0])
    W = inverse(X)
    H = pattern_hessian(W, P.rows, P.cols)
    # <E_e, M> = mult_e * M_e, so coordinates of P(W Z W) are H z / mult
    mult = np.where(P.rows == P.cols, 1.0, 2.0)
    z = linalg.solve(H, mult * _coordinates(Y, P.rows, P.cols), assume_a="pos")
    return SparseSymMatrix(P, z)


# ------------------------------------------------------------------
# Max-det completion
# ------------------------------------------------------------------

def dense_logdet_primal(S: np.ndarray, mask: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """
    Minimize tr(S X) - log det X over X supported on mask, by damped Newton
    in entry coordinates. The minimizer satisfies P(X^{-1}) = P(S); the
    problem is unbounded exactly when S has no PD completion.
    """
    n = S.shape[0]
    diag = np.diag(S)
    if np.any(diag <= 0):
        raise NotCompletableError(-1, "nonpositive diagonal entry")
    rows, cols = _entries(mask)
    mult = np.where(rows == cols, 1.0, 2.0)
    x = np.where(rows == cols, 1.0 / diag[rows], 0.0)
    s = S[rows, cols]

    def objective(x):
        X = _from_coordinates(x, rows, cols, n)
        try:
            L = linalg.cholesky(X, lower=True)
        except linalg.LinAlgError:
            return np.inf, None
        return float(mult @ (s * x) - 2.0 * np.log(np.diag(L)).sum()), L

    f, L = objective(x)
    for it in range(MAX_NEWTON):
        W = linalg.cho_solve((L, True), np.eye(n))
        grad = mult * (s - W[rows, cols])
        H = pattern_hessian(W, rows, cols)
        try:
            dx = -linalg.solve(H, grad, assume_a="pos")
        except linalg.LinAlgError:
            raise NotCompletableError(-1, "singular Hessian in dense primal Newton")
        dec = float(-grad @ dx)
        if dec / 2.0 <= tol:
            return _from_coordinates(x, rows, cols, n)
        t = 1.0
        while True:
            f_new, L_new = objective(x + t * dx)
            if f_new <= f - 0.25 * t * dec:
                break
            t *= 0.5
            if t < 1e-20:
                raise NotCompletableError(-1, "dense primal Newton failed to decrease")
        x, f, L = x + t * dx, f_new, L_new
        if f < -1e15 or not np.isfinite(f):
            raise NotCompletableError(-1, "primal objective unbounded below")
    raise NotCompletableError(-1, f"dense primal Newton did not converge in {MAX_NEWTON} iterations")


def dense_maxdet_completion(
    S,
    G: PatternLike,
    tol: float = 1e-12,
    max_sweeps: int = MAX_SWEEPS,
    limit: int = DENSE_LIMIT,
) -> np.ndarray:
    """
    Max-det completion W of the entries of S on G.

    Cyclic coordinate ascent over the missing entries; each update sets one
    entry so that the matching entry of W^{-1} vanishes (a 2x2 Schur
    complement), with a Woodbury update of K = W^{-1}. Runs until every
    |K_ij| / sqrt(K_ii K_jj) off G is at most tol. Entries on G are never
    written, so W matches S there bit for bit.
    """
    S = as_dense(S)
    n = S.shape[0]
    check_dense_size(n, limit)
    mask = as_mask(G, n)
    W = np.where(mask, S, 0.0)
    W = 0.5 * (W + W.T)
    missing_r, missing_c = np.nonzero(np.tril(~mask, -1))
    if missing_r.size == 0:
        if not is_positive_definite(W):
            raise NotCompletableError(-1, "fully specified matrix is not positive definite")
        return W

    if not is_positive_definite(W):
        X = dense_logdet_primal(W, mask)
        W = np.where(mask, W, inverse(X))
        if not is_positive_definite(W):
            raise NotCompletableError(-1, "warm start is not positive definite")

    pairs = list(zip(missing_r.tolist(), missing_c.tolist()))
    for sweep in range(max_sweeps):
        K = inverse(W)
        d = np.sqrt(np.diag(K))
        resid = np.abs(K[missing_r, missing_c]) / (d[missing_r] * d[missing_c])
        worst = float(resid.max())
        if worst <= tol:
            log.debug("max-det completion converged after %d sweeps (residual %.2e)", sweep, worst)
            return W
        for i, j in pairs:
            a, b, c = K[i, i], K[i, j], K[j, j]
            det = a * c - b * b
            if b == 0.0 or det <= 0.0:
                continue
            delta = b / det
            W[i, j] += delta
            W[j, i] = W[i, j]
            # K <- K - K U (C^{-1} + U^T K U)^{-1} U^T K with C = delta [[0,1],[1,0]]
            inner = np.array([[a, b + 1.0 / delta], [b + 1.0 / delta, c]])
            KU = K[:, [i, j]]
            K -= KU @ np.linalg.solve(inner, KU.T)
    raise OracleError(f"max-det completion did not converge in {max_sweeps} sweeps")


# ------------------------------------------------------------------
# Graphical lasso reference
# ------------------------------------------------------------------

def gl_objective(X, C, lam) -> float:
    """tr(C X) - log det X + sum_{i != j} lam_ij |X_ij|."""
    X, C = as_dense(X), as_dense(C)
    W = np.broadcast_to(np.asarray(lam, dtype=np.float64), X.shape).copy()
    np.fill_diagonal(W, 0.0)
    return float(np.sum(C * X) - logdet(X) + np.sum(W * np.abs(X)))


@dataclass
class GLResult:
    X: np.ndarray
    iterations: int
    residual: float
    objective: float


def _prox(V: np.ndarray, t: float, W: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    out = np.sign(V) * np.maximum(np.abs(V) - t * W, 0.0)
    np.fill_diagonal(out, np.diag(V))
    return np.where(allowed, out, 0.0)


def gl_reference_solve(
    C,
    lam,
    H: Optional[PatternLike] = None,
    tol: float = 1e-9,
    max_iter: int = 200_000,
    limit: int = DENSE_LIMIT,
) -> GLResult:
    """
    Proximal gradient with Barzilai-Borwein steps for

        min tr(C X) - log det X + sum_{i != j} lam_ij |X_ij|,  X supported on H.

    Backtracking keeps every iterate positive definite and enforces the
    quadratic upper bound; stops when the gradient map drops below tol.
    """
    C = as_dense(C)
    n = C.shape[0]
    check_dense_size(n, limit)
    W = np.broadcast_to(np.asarray(lam, dtype=np.float64), C.shape).copy()
    np.fill_diagonal(W, 0.0)
    allowed = as_mask(H, n) if H is not None else np.ones((n, n), dtype=bool)

    def smooth(X):
        L = linalg.cholesky(X, lower=True)
        return float(np.sum(C * X) - 2.0 * np.log(np.diag(L)).sum()), L

    X = np.diag(1.0 / np.diag(C))
    f, L = smooth(X)
    grad = C - linalg.cho_solve((L, True), np.eye(n))
    t = 1.0
    for it in range(1, max_iter + 1):
        while True:
            X_new = _prox(X - t * grad, t, W, allowed)
            X_new = 0.5 * (X_new + X_new.T)
            try:
                f_new, L_new = smooth(X_new)
            except linalg.LinAlgError:
                t *= 0.5
                continue
            D = X_new - X
            if f_new <= f + np.sum(grad * D) + np.sum(D * D) / (2.0 * t) + 1e-15 * abs(f):
                break
            t *= 0.5
            if t < 1e-20:
                raise OracleError("reference solver line search failed")
        grad_new = C - linalg.cho_solve((L_new, True), np.eye(n))
        gmap = float(np.linalg.norm(D) / t)
        X, f, L = X_new, f_new, L_new
        if gmap <= tol:
            obj = gl_objective(X, C, W)
            log.debug("reference solver converged in %d iterations", it)
            return GLResult(X, it, gmap, obj)
        dG = grad_new - grad
        grad = grad_new
        curv = float(np.sum(D * dG))
        t = float(np.sum(D * D) / curv) if curv > 0 else 1.0
    raise OracleError(f"reference solver did not converge in {max_iter} iterations")
