"""
Chordal embedding of a sparsity pattern and its clique tree.

Columns are referred to in elimination order (position k in the ordering)
inside this module; patterns handed back to callers are always in original
node indices.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .config import AMALGAMATION_MAX_ZERO_FRACTION, DEFAULT_ORDERING, ORDERING_OPTIONS, OrderingMethod
from .errors import ConfigError, PatternError
from .sparse_sym import SparseSymMatrix, SparsityPattern

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Ordering:
    """perm[k] is the node eliminated k-th; iperm inverts it."""

    perm: np.ndarray
    iperm: np.ndarray

    @property
    def n(self) -> int:
        return self.perm.size

    @classmethod
    def from_perm(cls, perm) -> "Ordering":
        perm = np.asarray(perm, dtype=np.int64).ravel()
        n = perm.size
        if n and (perm.min() < 0 or perm.max() >= n or np.unique(perm).size != n):
            raise PatternError("ordering is not a permutation")
        iperm = np.empty(n, dtype=np.int64)
        iperm[perm] = np.arange(n, dtype=np.int64)
        return cls(perm, iperm)

    @classmethod
    def identity(cls, n: int) -> "Ordering":
        return cls.from_perm(np.arange(n))


# ------------------------------------------------------------------
# Orderings
# ------------------------------------------------------------------

def minimum_degree_order(G: SparsityPattern) -> np.ndarray:
    """Greedy minimum degree on the explicit elimination graph, ties by smallest index."""
    n = G.n
    adj = [set() for _ in range(n)]
    rows, cols = G.edges()
    for i, j in zip(rows.tolist(), cols.tolist()):
        adj[i].add(j)
        adj[j].add(i)
    heap = [(len(adj[v]), v) for v in range(n)]
    heapq.heapify(heap)
    eliminated = np.zeros(n, dtype=bool)
    order = []
    while heap:
        d, v = heapq.heappop(heap)
        if eliminated[v] or d != len(adj[v]):
            continue
        eliminated[v] = True
        order.append(v)
        nbrs = adj[v]
        for u in nbrs:
            a = adj[u]
            a.discard(v)
            a |= nbrs
            a.discard(u)
            heapq.heappush(heap, (len(a), u))
        adj[v] = set()
    return np.asarray(order, dtype=np.int64)


def fill_reducing_order(G: SparsityPattern, method: Union[str, OrderingMethod] = DEFAULT_ORDERING) -> Ordering:
    try:
        method = OrderingMethod(method)
    except ValueError:
        raise ConfigError(f"unknown ordering '{method}'; choose from {sorted(ORDERING_OPTIONS)}") from None
    if method is OrderingMethod.NATURAL or G.n == 0:
        return Ordering.identity(G.n)
    if method is OrderingMethod.RCM:
        perm = reverse_cuthill_mckee(G.adjacency(), symmetric_mode=True)
        return Ordering.from_perm(perm)
    return Ordering.from_perm(minimum_degree_order(G))


# ------------------------------------------------------------------
# Symbolic factorization helpers
# ------------------------------------------------------------------

def _permuted_lower(P: SparsityPattern, iperm: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Strict lower adjacency of P in elimination order, as (colptr, rowind)."""
    rows, cols = P.edges()
    pr, pc = iperm[rows], iperm[cols]
    lo = np.minimum(pr, pc)
    hi = np.maximum(pr, pc)
    order = np.lexsort((hi, lo))
    ptr = np.zeros(P.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(lo, minlength=P.n), out=ptr[1:])
    return ptr, hi[order]


def _row_merge(n: int, ptr: np.ndarray, ind: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """struct(j) = higher neighbours of j united with each child's struct minus j."""
    parent = np.full(n, -1, dtype=np.int64)
    pending: List[list] = [[] for _ in range(n)]
    structs: List[np.ndarray] = [None] * n
    for j in range(n):
        own = ind[ptr[j]:ptr[j + 1]]
        parts = pending[j]
        pending[j] = None
        if parts:
            parts.append(own)
            s = np.unique(np.concatenate(parts))
        else:
            s = own
        structs[j] = s
        if s.size:
            p = int(s[0])
            parent[j] = p
            pending[p].append(s[1:])
    return structs, parent


def _postorder(parent: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Depth-first postorder; a child whose struct is {j} + struct(j) is visited last."""
    n = parent.size
    children: List[List[int]] = [[] for _ in range(n)]
    roots = []
    for j, p in enumerate(parent.tolist()):
        if p >= 0:
            children[p].append(j)
        else:
            roots.append(j)
    for j in range(n):
        ch = children[j]
        if len(ch) > 1:
            for c in ch:
                if counts[c] == counts[j] + 1:
                    ch.remove(c)
                    ch.append(c)
                    break
    post = np.empty(n, dtype=np.int64)
    k = 0
    for root in roots:
        stack = [[root, 0]]
        while stack:
            top = stack[-1]
            node, i = top
            ch = children[node]
            if i < len(ch):
                top[1] = i + 1
                stack.append([ch[i], 0])
            else:
                stack.pop()
                post[k] = node
                k += 1
    return post


def _apply_postorder(structs, parent, post):
    n = post.size
    newpos = np.empty(n, dtype=np.int64)
    newpos[post] = np.arange(n, dtype=np.int64)
    new_structs = [np.sort(newpos[structs[old]]) for old in post.tolist()]
    old_parent = parent[post]
    new_parent = np.where(old_parent >= 0, newpos[np.maximum(old_parent, 0)], -1)
    return new_structs, new_parent


def _maximal_supernodes(parent: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Column ranges snptr; j joins j-1 when struct(j-1) = {j} + struct(j)."""
    n = parent.size
    if n == 0:
        return np.zeros(1, dtype=np.int64)
    joins = (parent[:-1] == np.arange(1, n)) & (counts[:-1] == counts[1:] + 1)
    starts = np.flatnonzero(~joins) + 1
    return np.concatenate([[0], starts, [n]]).astype(np.int64)


def _amalgamate(snptr: np.ndarray, alphas: List[np.ndarray], max_cols: int):
    """Merge each supernode into the next one when that is its parent and the merge stays cheap."""
    groups = []
    first, last, alpha, zeros = int(snptr[0]), int(snptr[1]) - 1, alphas[0], 0
    for k in range(1, snptr.size - 1):
        f, l, a = int(snptr[k]), int(snptr[k + 1]) - 1, alphas[k]
        nn_c = last - first + 1
        nn_p = l - f + 1
        is_parent = alpha.size > 0 and f <= alpha[0] <= l
        if is_parent and nn_c + nn_p <= max_cols:
            extra = nn_c * (nn_p + a.size - alpha.size)
            nn = nn_c + nn_p
            total = nn * (nn + 1) // 2 + nn * a.size
            merged_zeros = zeros + extra
            if merged_zeros <= AMALGAMATION_MAX_ZERO_FRACTION * total:
                last, alpha, zeros = l, a, merged_zeros
                continue
        groups.append((first, last, alpha))
        first, last, alpha, zeros = f, l, a, 0
    groups.append((first, last, alpha))
    snptr = np.array([g[0] for g in groups] + [groups[-1][1] + 1], dtype=np.int64)
    return snptr, [g[2] for g in groups]


# ------------------------------------------------------------------
# Embedding
# ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChordalEmbedding:
    """G, its chordal supergraph Gt, the (postordered) elimination ordering and fill edges."""

    G: SparsityPattern
    Gt: SparsityPattern
    ordering: Ordering
    etree: np.ndarray
    added_rows: np.ndarray
    added_cols: np.ndarray

    @property
    def n(self) -> int:
        return self.G.n

    @property
    def m(self) -> int:
        return int(self.added_rows.size)

    def added_edges(self) -> List[Tuple[int, int]]:
        return list(zip(self.added_rows.tolist(), self.added_cols.tolist()))


def symbolic_embed(G: SparsityPattern, ordering: Ordering, amalgamate: int = 0) -> ChordalEmbedding:
    """Gt = pattern of L + L^T for the symbolic Cholesky factor of G under ordering."""
    n = G.n
    if ordering.n != n:
        raise PatternError(f"ordering has length {ordering.n}, pattern has n={n}")
    ptr, ind = _permuted_lower(G, ordering.iperm)
    structs, parent = _row_merge(n, ptr, ind)
    counts = np.array([s.size for s in structs], dtype=np.int64)
    post = _postorder(parent, counts)
    structs, parent = _apply_postorder(structs, parent, post)
    perm = ordering.perm[post]

    snptr = _maximal_supernodes(parent, counts[post])
    alphas = [structs[int(snptr[k + 1]) - 1] for k in range(snptr.size - 1)]
    if amalgamate > 1 and n:
        before = snptr.size - 1
        snptr, alphas = _amalgamate(snptr, alphas, amalgamate)
        log.debug("amalgamation: %d -> %d supernodes", before, snptr.size - 1)

    rows, cols = [], []
    etree = np.full(n, -1, dtype=np.int64)
    for k in range(snptr.size - 1):
        f, l = int(snptr[k]), int(snptr[k + 1])
        nn = l - f
        alpha = alphas[k]
        tr, tc = np.tril_indices(nn, -1)
        rows.append(f + tr)
        cols.append(f + tc)
        rows.append(np.tile(alpha, nn))
        cols.append(np.repeat(np.arange(f, l, dtype=np.int64), alpha.size))
        etree[f:l - 1] = np.arange(f + 1, l)
        if alpha.size:
            etree[l - 1] = alpha[0]
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    Gt = SparsityPattern.from_pairs(n, perm[rows], perm[cols])

    added = ~np.isin(Gt.keys, G.keys, assume_unique=True)
    final = Ordering.from_perm(perm)
    E = ChordalEmbedding(G, Gt, final, etree, Gt.rows[added], Gt.cols[added])
    log.info("embedding: n=%d, |G| edges=%d, m=%d added edges", n, G.num_edges, E.m)
    return E


def is_perfect_elimination(P: SparsityPattern, ordering: Ordering) -> bool:
    """True iff eliminating P in this order creates no fill."""
    ptr, ind = _permuted_lower(P, ordering.iperm)
    structs, _ = _row_merge(P.n, ptr, ind)
    return all(s.size == ptr[j + 1] - ptr[j] for j, s in enumerate(structs))


# ------------------------------------------------------------------
# Clique tree
# ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CliqueTree:
    """
    Supernodal elimination structure of a chordal pattern.

    Supernode k owns columns snptr[k]:snptr[k+1] (elimination order). Its
    clique is snrow[k] = nu_k followed by the separator alpha_k; relidx[k]
    locates alpha_k inside the parent's clique. Numeric data lives in flat
    buffers with one row-major |clique| x |nu| block per supernode at
    blkptr[k]. Supernodes are numbered in postorder, so children precede
    parents.
    """

    pattern: SparsityPattern
    perm: np.ndarray
    iperm: np.ndarray
    snptr: np.ndarray
    snpar: np.ndarray
    snrow: List[np.ndarray]
    relidx: List[np.ndarray]
    blkptr: np.ndarray
    entry_pos: np.ndarray

    @property
    def n(self) -> int:
        return self.pattern.n

    @property
    def num_cliques(self) -> int:
        return self.snptr.size - 1

    @cached_property
    def children(self) -> List[List[int]]:
        ch: List[List[int]] = [[] for _ in range(self.num_cliques)]
        for k, p in enumerate(self.snpar.tolist()):
            if p >= 0:
                ch[p].append(k)
        return ch

    @cached_property
    def postorder(self) -> np.ndarray:
        return np.arange(self.num_cliques, dtype=np.int64)

    def width(self, k: int) -> int:
        return int(self.snptr[k + 1] - self.snptr[k])

    def clique(self, k: int) -> np.ndarray:
        """Clique k in original node indices."""
        return self.perm[self.snrow[k]]

    def separator(self, k: int) -> np.ndarray:
        return self.perm[self.snrow[k][self.width(k):]]

    def cliques(self) -> List[np.ndarray]:
        return [self.clique(k) for k in range(self.num_cliques)]

    @property
    def max_clique_size(self) -> int:
        return max((r.size for r in self.snrow), default=0)

    def gather(self, M: SparseSymMatrix) -> np.ndarray:
        """Flat block buffer holding M's lower entries; upper parts of the top squares stay 0."""
        if M.pattern is not self.pattern and M.pattern != self.pattern:
            raise PatternError("matrix pattern differs from the clique tree pattern")
        buf = np.zeros(int(self.blkptr[-1]))
        buf[self.entry_pos] = M.values
        return buf

    def scatter(self, buf: np.ndarray) -> SparseSymMatrix:
        return SparseSymMatrix(self.pattern, buf[self.entry_pos])

    def block(self, buf: np.ndarray, k: int) -> np.ndarray:
        return buf[self.blkptr[k]:self.blkptr[k + 1]].reshape(self.snrow[k].size, self.width(k))

    def has_running_intersection(self) -> bool:
        """Every vertex lies in a connected set of cliques."""
        in_clique = np.zeros(self.n, dtype=np.int64)
        in_sep = np.zeros(self.n, dtype=np.int64)
        for k in range(self.num_cliques):
            rows = self.snrow[k]
            in_clique[rows] += 1
            if self.snpar[k] >= 0:
                in_sep[rows[self.width(k):]] += 1
        return bool(np.all(in_clique - in_sep == 1))


def build_clique_tree(E: ChordalEmbedding) -> CliqueTree:
    """Clique tree of E.Gt; verifies that E.ordering eliminates Gt without fill."""
    Gt = E.Gt
    n = Gt.n
    ptr, ind = _permuted_lower(Gt, E.ordering.iperm)
    structs, parent = _row_merge(n, ptr, ind)
    counts = np.array([s.size for s in structs], dtype=np.int64)
    if not np.array_equal(counts, np.diff(ptr)):
        j = int(np.flatnonzero(counts != np.diff(ptr))[0])
        raise PatternError(f"embedding is not chordal under its ordering: eliminating column {j} creates fill")

    post = _postorder(parent, counts)
    structs, parent = _apply_postorder(structs, parent, post)
    counts = counts[post]
    perm = E.ordering.perm[post]
    iperm = np.empty(n, dtype=np.int64)
    iperm[perm] = np.arange(n, dtype=np.int64)

    snptr = _maximal_supernodes(parent, counts)
    S = snptr.size - 1
    sn_of_col = np.repeat(np.arange(S, dtype=np.int64), np.diff(snptr))
    snrow, snpar = [], np.full(S, -1, dtype=np.int64)
    for k in range(S):
        f, l = int(snptr[k]), int(snptr[k + 1])
        alpha = structs[l - 1]
        snrow.append(np.concatenate([np.arange(f, l, dtype=np.int64), alpha]))
        if alpha.size:
            snpar[k] = sn_of_col[alpha[0]]
    relidx = []
    for k in range(S):
        nn = int(snptr[k + 1] - snptr[k])
        alpha = snrow[k][nn:]
        if snpar[k] < 0:
            relidx.append(np.zeros(0, dtype=np.int64))
            continue
        prow = snrow[snpar[k]]
        pos = np.searchsorted(prow, alpha)
        if np.any(pos >= prow.size) or not np.array_equal(prow[np.minimum(pos, prow.size - 1)], alpha):
            raise PatternError(f"separator of clique {k} is not contained in its parent clique")
        relidx.append(pos)

    sizes = np.array([r.size * int(snptr[k + 1] - snptr[k]) for k, r in enumerate(snrow)], dtype=np.int64)
    blkptr = np.zeros(S + 1, dtype=np.int64)
    np.cumsum(sizes, out=blkptr[1:])

    # flat position of every stored entry of Gt
    rowptr = np.zeros(S + 1, dtype=np.int64)
    np.cumsum([r.size for r in snrow], out=rowptr[1:])
    row_keys = np.concatenate([k * n + r for k, r in enumerate(snrow)]) if S else np.zeros(0, dtype=np.int64)
    pr, pc = iperm[Gt.rows], iperm[Gt.cols]
    er, ec = np.maximum(pr, pc), np.minimum(pr, pc)
    k = sn_of_col[ec]
    idx = np.searchsorted(row_keys, k * n + er)
    ri = idx - rowptr[k]
    ci = ec - snptr[k]
    nn = snptr[k + 1] - snptr[k]
    entry_pos = blkptr[k] + ri * nn + ci

    tree = CliqueTree(Gt, perm, iperm, snptr, snpar, snrow, relidx, blkptr, entry_pos)
    log.info("clique tree: %d cliques, largest %d", S, tree.max_clique_size)
    return tree


# ------------------------------------------------------------------
# Added-edge basis
# ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EdgeBasis:
    """
    Orthonormal basis of the added edges: A(y) puts y_e * scale on both
    entries of edge e, so ||A(y)||_F = ||y||_2 and A^T(A(y)) = y.
    """

    pattern: SparsityPattern
    rows: np.ndarray
    cols: np.ndarray
    gt_pos: np.ndarray
    scale: float = 1.0 / math.sqrt(2.0)

    @property
    def m(self) -> int:
        return int(self.rows.size)

    def apply(self, y: np.ndarray) -> SparseSymMatrix:
        values = np.zeros(self.pattern.nnz)
        values[self.gt_pos] = self.scale * np.asarray(y, dtype=np.float64)
        return SparseSymMatrix(self.pattern, values)

    def adjoint(self, M: SparseSymMatrix) -> np.ndarray:
        if M.pattern is self.pattern or M.pattern == self.pattern:
            return 2.0 * self.scale * M.values[self.gt_pos]
        pos = M.pattern.locate(self.rows, self.cols)
        vals = np.where(pos >= 0, M.values[np.maximum(pos, 0)], 0.0)
        return 2.0 * self.scale * vals

    def adjoint_dense(self, M: np.ndarray) -> np.ndarray:
        return 2.0 * self.scale * np.asarray(M)[self.rows, self.cols]

    def basis_matrix(self, e: int) -> np.ndarray:
        """Dense A_e for edge e."""
        A = np.zeros((self.pattern.n, self.pattern.n))
        A[self.rows[e], self.cols[e]] = A[self.cols[e], self.rows[e]] = self.scale
        return A


def edge_basis(E: ChordalEmbedding) -> EdgeBasis:
    return EdgeBasis(E.Gt, E.added_rows, E.added_cols, E.Gt.locate(E.added_rows, E.added_cols))


def embedding_stats(E: ChordalEmbedding, tree: Optional[CliqueTree] = None) -> Dict[str, float]:
    stats = {
        "n": E.n,
        "edges_G": E.G.num_edges,
        "edges_Gt": E.Gt.num_edges,
        "m": E.m,
        "m_over_n": E.m / E.n if E.n else 0.0,
    }
    if tree is not None:
        stats["cliques"] = tree.num_cliques
        stats["max_clique"] = tree.max_clique_size
    return stats
