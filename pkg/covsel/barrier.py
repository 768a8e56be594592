"""
Log-det barrier kernels on a chordal pattern.

For X in K (PD matrices supported on the chordal pattern) and S in the
interior of K* (pattern matrices with a PD completion):

    f(X)  = -log det X             grad f(X)  = -P(X^{-1})
    f*(S) = n + log det X(S)       grad f*(S) = -X(S),  where P(X(S)^{-1}) = S

Every kernel is a single pass over the clique tree. Bottom-up passes
(children before parents) assemble frontal matrices with extend-add;
top-down passes read each separator block from the parent's full clique
matrix. Work is proportional to the sum of cubed clique sizes.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy import linalg

from .chordal import CliqueTree
from .errors import NotCompletableError, NotPositiveDefiniteError
from .sparse_sym import SparseSymMatrix

log = logging.getLogger(__name__)


def _sym(A: np.ndarray) -> np.ndarray:
    """Full symmetric matrix from the lower triangle of A."""
    return np.tril(A) + np.tril(A, -1).T


def _phi(M: np.ndarray) -> np.ndarray:
    """Strict lower part plus half the diagonal."""
    out = np.tril(M, -1)
    out[np.diag_indices_from(out)] = 0.5 * np.diag(M)
    return out


def _lower_inv(L: np.ndarray) -> np.ndarray:
    return linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)


def _right_solve(L: np.ndarray, A: np.ndarray, trans: bool = False) -> np.ndarray:
    """A L^{-T}, or A L^{-1} with trans; L lower triangular."""
    if A.shape[0] == 0:
        return np.zeros((0, L.shape[0]))
    return linalg.solve_triangular(L, A.T, lower=True, trans="T" if trans else "N").T


@dataclass(eq=False)
class ChordalFactor:
    """
    Cholesky factor of a matrix supported on the clique tree's pattern,
    stored as one |clique| x |nu| block per supernode: L_NN on top (lower
    triangular), L_AN below. The factored matrix, in elimination order, is
    L L^T.
    """

    tree: CliqueTree
    L: np.ndarray
    logdet: float
    _inverse: Optional[list] = field(default=None, repr=False)
    _completion: Optional[list] = field(default=None, repr=False)
    _projinv: Optional[SparseSymMatrix] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.tree.n

    def blocks(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        blk = self.tree.block(self.L, k)
        nn = self.tree.width(k)
        return blk[:nn], blk[nn:]

    def to_scipy(self) -> sp.csc_matrix:
        """L as a sparse lower-triangular matrix in elimination order (tree.perm)."""
        rows, cols, vals = [], [], []
        for k in range(self.tree.num_cliques):
            blk = self.tree.block(self.L, k)
            nn = self.tree.width(k)
            gamma = self.tree.snrow[k]
            f = int(self.tree.snptr[k])
            r, c = np.nonzero(np.tri(gamma.size, nn, dtype=bool))
            rows.append(gamma[r])
            cols.append(f + c)
            vals.append(blk[r, c])
        n = self.n
        return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


# ------------------------------------------------------------------
# Primal side: f, grad f, hess f
# ------------------------------------------------------------------

def factor_primal(X: SparseSymMatrix, tree: CliqueTree) -> ChordalFactor:
    """Multifrontal Cholesky of X; logdet = log det X."""
    buf = tree.gather(X)
    L = np.empty_like(buf)
    logdet = 0.0
    updates: Dict[int, np.ndarray] = {}
    for k in range(tree.num_cliques):
        nn = tree.width(k)
        size = tree.snrow[k].size
        F = np.zeros((size, size))
        F[:, :nn] = tree.block(buf, k)
        for c in tree.children[k]:
            ri = tree.relidx[c]
            F[np.ix_(ri, ri)] += updates.pop(c)
        try:
            L_NN = linalg.cholesky(_sym(F[:nn, :nn]), lower=True)
        except linalg.LinAlgError:
            log.debug("factor_primal: pivot failure in clique %d", k)
            raise NotPositiveDefiniteError(k)
        L_AN = _right_solve(L_NN, F[nn:, :nn])
        if size > nn:
            updates[k] = F[nn:, nn:] - L_AN @ L_AN.T
        out = tree.block(L, k)
        out[:nn] = L_NN
        out[nn:] = L_AN
        logdet += 2.0 * float(np.log(np.diag(L_NN)).sum())
    return ChordalFactor(tree, L, logdet)


def f_primal(X: SparseSymMatrix, tree: CliqueTree) -> Tuple[float, ChordalFactor]:
    F = factor_primal(X, tree)
    return -F.logdet, F


class _ParentCache:
    """Holds each clique's full matrix until its last child has read it."""

    def __init__(self, tree: CliqueTree):
        self.tree = tree
        self.full: Dict[int, np.ndarray] = {}
        self.remaining = [len(ch) for ch in tree.children]

    def separator_block(self, k: int) -> np.ndarray:
        p = int(self.tree.snpar[k])
        if p < 0:
            return np.zeros((0, 0))
        ri = self.tree.relidx[k]
        block = self.full[p][np.ix_(ri, ri)]
        self.remaining[p] -= 1
        if self.remaining[p] == 0:
            del self.full[p]
        return block

    def store(self, k: int, NN: np.ndarray, AN: np.ndarray, AA: np.ndarray) -> None:
        if self.remaining[k]:
            self.full[k] = np.block([[NN, AN.T], [AN, AA]])


def _inverse_data(F: ChordalFactor) -> list:
    """Per clique (B, P, Y_AA, Y_AN, Y_NN) of the projected inverse Y = P(X^{-1})."""
    if F._inverse is not None:
        return F._inverse
    tree = F.tree
    data: List[tuple] = [None] * tree.num_cliques
    cache = _ParentCache(tree)
    for k in reversed(range(tree.num_cliques)):
        L_NN, L_AN = F.blocks(k)
        Linv = _lower_inv(L_NN)
        P = Linv.T @ Linv
        B = _right_solve(L_NN, L_AN, trans=True)
        Y_AA = cache.separator_block(k)
        Y_AN = -Y_AA @ B
        Y_NN = P - Y_AN.T @ B
        data[k] = (B, P, Y_AA, Y_AN, Y_NN)
        cache.store(k, Y_NN, Y_AN, Y_AA)
    F._inverse = data
    return data


def projected_inverse(F: ChordalFactor) -> SparseSymMatrix:
    """P(X^{-1}) on the factor's pattern."""
    if F._projinv is None:
        tree = F.tree
        out = np.empty_like(F.L)
        for k, (_, _, _, Y_AN, Y_NN) in enumerate(_inverse_data(F)):
            nn = tree.width(k)
            blk = tree.block(out, k)
            blk[:nn] = Y_NN
            blk[nn:] = Y_AN
        F._projinv = tree.scatter(out)
    return F._projinv


def gradient_primal(F: ChordalFactor) -> SparseSymMatrix:
    Y = projected_inverse(F)
    return Y.with_values(-Y.values)


def hess_f_mvp(F: ChordalFactor, dX: SparseSymMatrix) -> SparseSymMatrix:
    """P(X^{-1} dX X^{-1}), the negated derivative of the projected inverse along dX."""
    tree = F.tree
    inv = _inverse_data(F)
    buf = tree.gather(dX)
    S = tree.num_cliques

    # forward: derivative of the factorization
    dL: List[Tuple[np.ndarray, np.ndarray]] = [None] * S
    updates: Dict[int, np.ndarray] = {}
    for k in range(S):
        nn = tree.width(k)
        size = tree.snrow[k].size
        L_NN, L_AN = F.blocks(k)
        dF = np.zeros((size, size))
        dF[:, :nn] = tree.block(buf, k)
        for c in tree.children[k]:
            ri = tree.relidx[c]
            dF[np.ix_(ri, ri)] += updates.pop(c)
        Linv = _lower_inv(L_NN)
        dL_NN = L_NN @ _phi(Linv @ _sym(dF[:nn, :nn]) @ Linv.T)
        dL_AN = (dF[nn:, :nn] - L_AN @ dL_NN.T) @ Linv.T
        if size > nn:
            updates[k] = dF[nn:, nn:] - dL_AN @ L_AN.T - L_AN @ dL_AN.T
        dL[k] = (dL_NN, dL_AN, Linv)

    # backward: derivative of the projected inverse
    out = np.empty_like(F.L)
    cache = _ParentCache(tree)
    for k in reversed(range(S)):
        nn = tree.width(k)
        B, P, Y_AA, Y_AN, _ = inv[k]
        L_NN, _ = F.blocks(k)
        dL_NN, dL_AN, Linv = dL[k]
        dB = (dL_AN - B @ dL_NN) @ Linv
        dY_AA = cache.separator_block(k)
        dY_AN = -dY_AA @ B - Y_AA @ dB
        T = dL_NN @ L_NN.T
        dP = -P @ (T + T.T) @ P
        dY_NN = dP - dY_AN.T @ B - Y_AN.T @ dB
        blk = tree.block(out, k)
        blk[:nn] = -dY_NN
        blk[nn:] = -dY_AN
        cache.store(k, dY_NN, dY_AN, dY_AA)
    return tree.scatter(out)


# ------------------------------------------------------------------
# Dual side: f*, grad f*, hess f*
# ------------------------------------------------------------------

def complete_factor(S: SparseSymMatrix, tree: CliqueTree) -> ChordalFactor:
    """
    Factor of the unique X on the pattern with P(X^{-1}) = S, i.e. X^{-1} is
    the max-det completion of S. Per clique, top-down:

        B = -S_AA^{-1} S_AN,  Q = (S_NN + S_NA B)^{-1},  L_NN = chol(Q),  L_AN = B L_NN
    """
    buf = tree.gather(S)
    L = np.empty_like(buf)
    logdet = 0.0
    data: List[tuple] = [None] * tree.num_cliques
    cache = _ParentCache(tree)
    for k in reversed(range(tree.num_cliques)):
        nn = tree.width(k)
        blk = tree.block(buf, k)
        S_NN = _sym(blk[:nn])
        S_AN = blk[nn:]
        S_AA = cache.separator_block(k)
        if S_AA.size:
            try:
                cho = linalg.cho_factor(S_AA, lower=True)
            except linalg.LinAlgError:
                log.debug("complete_factor: separator of clique %d not PD", k)
                raise NotCompletableError(k)
            B = -linalg.cho_solve(cho, S_AN)
            Z = S_NN + S_AN.T @ B
        else:
            cho = None
            B = np.zeros((0, nn))
            Z = S_NN
        try:
            Q = linalg.cho_solve(linalg.cho_factor(Z, lower=True), np.eye(nn))
            Q = 0.5 * (Q + Q.T)
            L_NN = linalg.cholesky(Q, lower=True)
        except linalg.LinAlgError:
            log.debug("complete_factor: Schur complement of clique %d not PD", k)
            raise NotCompletableError(k)
        out = tree.block(L, k)
        out[:nn] = L_NN
        out[nn:] = B @ L_NN
        logdet += 2.0 * float(np.log(np.diag(L_NN)).sum())
        data[k] = (cho, B, L_NN, Q)
        cache.store(k, S_NN, S_AN, S_AA)
    return ChordalFactor(tree, L, logdet, _completion=data)


def f_star(S: SparseSymMatrix, tree: CliqueTree) -> Tuple[float, ChordalFactor]:
    """f*(S) = n + log det X(S), with the factor of X(S)."""
    F = complete_factor(S, tree)
    return S.n + F.logdet, F


def primal_matrix(F: ChordalFactor) -> SparseSymMatrix:
    """X = L L^T on the pattern, assembled bottom-up; equals -grad f*(S) for a completion factor."""
    return _assemble(F, None)


def _assemble(F: ChordalFactor, dL: Optional[list]) -> SparseSymMatrix:
    """L L^T, or with dL given the tangent dL L^T + L dL^T, restricted to the pattern."""
    tree = F.tree
    out = np.empty_like(F.L)
    updates: Dict[int, np.ndarray] = {}
    for k in range(tree.num_cliques):
        nn = tree.width(k)
        Lk = tree.block(F.L, k)
        if dL is None:
            Fk = Lk @ Lk.T
        else:
            T = dL[k] @ Lk.T
            Fk = T + T.T
        for c in tree.children[k]:
            ri = tree.relidx[c]
            Fk[np.ix_(ri, ri)] += updates.pop(c)
        tree.block(out, k)[:] = Fk[:, :nn]
        if Fk.shape[0] > nn:
            updates[k] = Fk[nn:, nn:]
    return tree.scatter(out)


def _completion_data(F: ChordalFactor) -> list:
    """(cho(S_AA), B, L_NN, Q) per clique; derived from the projected inverse for primal factors."""
    if F._completion is not None:
        return F._completion
    data = []
    for k, (B, _, Y_AA, _, _) in enumerate(_inverse_data(F)):
        L_NN, _ = F.blocks(k)
        cho = linalg.cho_factor(Y_AA, lower=True) if Y_AA.size else None
        data.append((cho, B, L_NN, L_NN @ L_NN.T))
    F._completion = data
    return data


def hess_fstar_mvp(F: ChordalFactor, dS: SparseSymMatrix) -> SparseSymMatrix:
    """
    The inverse Hessian of f at X applied to dS, i.e. -dX where dX is the
    derivative of X(S) along dS. Top-down for the factor tangent, then a
    bottom-up tangent assembly.
    """
    tree = F.tree
    data = _completion_data(F)
    buf = tree.gather(dS)
    dL: List[np.ndarray] = [None] * tree.num_cliques
    cache = _ParentCache(tree)
    for k in reversed(range(tree.num_cliques)):
        nn = tree.width(k)
        blk = tree.block(buf, k)
        dS_NN = _sym(blk[:nn])
        dS_AN = blk[nn:]
        dS_AA = cache.separator_block(k)
        cho, B, L_NN, Q = data[k]
        if cho is not None:
            dB = -linalg.cho_solve(cho, dS_AN + dS_AA @ B)
            BtAN = B.T @ dS_AN
            dZ = dS_NN + BtAN + BtAN.T + B.T @ dS_AA @ B
        else:
            dB = np.zeros((0, nn))
            dZ = dS_NN
        dQ = -Q @ dZ @ Q
        Linv = _lower_inv(L_NN)
        dL_NN = L_NN @ _phi(Linv @ dQ @ Linv.T)
        dL_AN = dB @ L_NN + B @ dL_NN
        dL[k] = np.vstack([dL_NN, dL_AN])
        cache.store(k, dS_NN, dS_AN, dS_AA)
    dX = _assemble(F, dL)
    return dX.with_values(-dX.values)
