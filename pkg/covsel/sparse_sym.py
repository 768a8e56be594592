"""
Symmetric sparse storage.

A pattern stores the lower triangle in compressed-column form with the
diagonal always present and first in its column; queries reflect (i, j)
onto (max, min). Values are aligned with the stored entries.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .config import COV_SAMPLE_CHUNK, COV_TILE_VALUES
from .errors import NonFiniteError, PatternError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Lower-triangle CSC index set over n nodes; diagonal always included."""

    n: int
    indptr: np.ndarray
    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indptr", np.ascontiguousarray(self.indptr, dtype=np.int64))
        object.__setattr__(self, "rows", np.ascontiguousarray(self.rows, dtype=np.int64))

    # ---- derived index arrays ----
    @cached_property
    def cols(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))

    @cached_property
    def keys(self) -> np.ndarray:
        """Global sort keys col*n + row, strictly increasing."""
        return self.cols * self.n + self.rows

    @cached_property
    def diag_positions(self) -> np.ndarray:
        return self.indptr[:-1].copy()

    @cached_property
    def offdiag_mask(self) -> np.ndarray:
        return self.rows != self.cols

    @property
    def nnz(self) -> int:
        """Number of stored (lower) entries, diagonal included."""
        return int(self.rows.size)

    @property
    def num_edges(self) -> int:
        return self.nnz - self.n

    def __eq__(self, other):
        if not isinstance(other, SparsityPattern):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.keys, other.keys)

    __hash__ = None

    def __repr__(self):
        return f"SparsityPattern(n={self.n}, edges={self.num_edges})"

    # ---- construction ----
    @classmethod
    def from_pairs(cls, n: int, rows, cols) -> "SparsityPattern":
        """Canonical pattern from arbitrary index pairs; adds the diagonal and reflects."""
        n = int(n)
        if n < 0:
            raise PatternError(f"node count must be nonnegative, got {n}")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.size != cols.size:
            raise PatternError("row and column index arrays differ in length")
        if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n):
            raise PatternError(f"index out of range for n={n}")
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        diag = np.arange(n, dtype=np.int64)
        keys = np.unique(np.concatenate([lo * n + hi, diag * n + diag]))
        c = keys // n if n else keys
        r = keys - c * n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(c, minlength=n), out=indptr[1:])
        return cls(n, indptr, r)

    # ---- queries ----
    def locate(self, i, j) -> np.ndarray:
        """Positions of entries (i, j) in storage order, -1 where absent."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        r = np.maximum(i, j)
        c = np.minimum(i, j)
        key = c * self.n + r
        pos = np.searchsorted(self.keys, key)
        pos_clipped = np.minimum(pos, max(self.nnz - 1, 0))
        found = (pos < self.nnz) & (self.keys[pos_clipped] == key) if self.nnz else np.zeros(key.shape, bool)
        return np.where(found, pos, -1)

    def contains(self, i: int, j: int) -> bool:
        return bool(self.locate(i, j) >= 0)

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Off-diagonal entries as (rows, cols) with rows > cols, in storage order."""
        mask = self.offdiag_mask
        return self.rows[mask], self.cols[mask]

    def degrees(self) -> np.ndarray:
        r, c = self.edges()
        return np.bincount(r, minlength=self.n) + np.bincount(c, minlength=self.n)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency without the diagonal."""
        r, c = self.edges()
        data = np.ones(2 * r.size)
        A = sp.coo_matrix((data, (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(self.n, self.n))
        return A.tocsr()

    def to_mask(self) -> np.ndarray:
        mask = np.zeros((self.n, self.n), dtype=bool)
        mask[self.rows, self.cols] = True
        mask[self.cols, self.rows] = True
        return mask


def build_pattern(n: int, edges: Iterable = ()) -> SparsityPattern:
    """Canonical pattern with the diagonal added, duplicates merged, symmetry closed."""
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise PatternError("edges must be index pairs")
    return SparsityPattern.from_pairs(n, arr[:, 0], arr[:, 1])


def diagonal_pattern(n: int) -> SparsityPattern:
    return build_pattern(n)


def full_pattern(n: int) -> SparsityPattern:
    r, c = np.tril_indices(n)
    return SparsityPattern.from_pairs(n, r, c)


def band_pattern(n: int, halfwidth: int) -> SparsityPattern:
    rows, cols = [], []
    for d in range(1, halfwidth + 1):
        idx = np.arange(n - d)
        rows.append(idx + d)
        cols.append(idx)
    if not rows:
        return diagonal_pattern(n)
    return SparsityPattern.from_pairs(n, np.concatenate(rows), np.concatenate(cols))


def pattern_of(M: np.ndarray, tol: float = 0.0) -> SparsityPattern:
    """Pattern of the entries of a dense symmetric matrix with |M_ij| > tol."""
    M = np.asarray(M)
    r, c = np.nonzero(np.tril(np.abs(M) > tol))
    return SparsityPattern.from_pairs(M.shape[0], r, c)


def pattern_union(P: SparsityPattern, Q: SparsityPattern) -> SparsityPattern:
    if P.n != Q.n:
        raise PatternError(f"size mismatch: {P.n} vs {Q.n}")
    return SparsityPattern.from_pairs(P.n, np.concatenate([P.rows, Q.rows]), np.concatenate([P.cols, Q.cols]))


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Values aligned with the stored entries of a SparsityPattern."""

    pattern: SparsityPattern
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != (self.pattern.nnz,):
            raise PatternError(f"expected {self.pattern.nnz} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("matrix values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.pattern.n

    def __repr__(self):
        return f"SparseSymMatrix(n={self.n}, edges={self.pattern.num_edges})"

    @classmethod
    def from_entries(cls, n: int, rows, cols, vals) -> "SparseSymMatrix":
        """Matrix from (row, col, value) triples; missing diagonal entries become 0."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        pattern = SparsityPattern.from_pairs(n, rows, cols)
        pos = pattern.locate(rows, cols)
        if np.unique(pos).size != pos.size:
            raise PatternError("duplicate entries")
        values = np.zeros(pattern.nnz)
        values[pos] = vals
        return cls(pattern, values)

    def with_values(self, values: np.ndarray) -> "SparseSymMatrix":
        return SparseSymMatrix(self.pattern, values)

    def diagonal(self) -> np.ndarray:
        return self.values[self.pattern.diag_positions]

    def get(self, i: int, j: int) -> float:
        pos = int(self.pattern.locate(i, j))
        return float(self.values[pos]) if pos >= 0 else 0.0

    def to_dense(self) -> np.ndarray:
        P = self.pattern
        M = np.zeros((P.n, P.n))
        M[P.rows, P.cols] = self.values
        M[P.cols, P.rows] = self.values
        return M

    def to_scipy(self) -> sp.csc_matrix:
        """Full symmetric scipy matrix (both triangles)."""
        P = self.pattern
        off = P.offdiag_mask
        r = np.concatenate([P.rows, P.cols[off]])
        c = np.concatenate([P.cols, P.rows[off]])
        v = np.concatenate([self.values, self.values[off]])
        return sp.csc_matrix((v, (r, c)), shape=(P.n, P.n))

    def lower_scipy(self) -> sp.coo_matrix:
        P = self.pattern
        return sp.coo_matrix((self.values, (P.rows, P.cols)), shape=(P.n, P.n))

    def inner(self, other: "SparseSymMatrix") -> float:
        """Trace inner product tr(self * other) of the two symmetric matrices."""
        if other.pattern is self.pattern or other.pattern == self.pattern:
            prod = self.values * other.values
            return float(2.0 * prod.sum() - prod[self.pattern.diag_positions].sum())
        pos = self.pattern.locate(other.pattern.rows, other.pattern.cols)
        hit = pos >= 0
        prod = self.values[pos[hit]] * other.values[hit]
        diag = other.pattern.rows[hit] == other.pattern.cols[hit]
        return float(2.0 * prod.sum() - prod[diag].sum())

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """n x N matrix of centered samples, one sample per column, column-major."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asfortranarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] < 1:
            raise PatternError("sample matrix must be n x N with N >= 1")
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("sample values must be finite")
        scale = float(np.abs(data).max()) if data.size else 0.0
        if data.size and float(np.abs(data.mean(axis=1)).max()) > 1e-12 * max(scale, 1.0):
            raise PatternError("sample matrix is not centered; use SampleMatrix.from_samples")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_samples(cls, raw: np.ndarray) -> "SampleMatrix":
        """Center an n x N array of raw samples (one sample per column)."""
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 2:
            raise PatternError("samples must be a 2-D array")
        return cls(raw - raw.mean(axis=1, keepdims=True))

    @classmethod
    def from_observations(cls, obs: np.ndarray) -> "SampleMatrix":
        """Center an N x n array with one observation per row."""
        return cls.from_samples(np.asarray(obs, dtype=np.float64).T)

    def covariance_diagonal(self) -> np.ndarray:
        return _sample_products(self.data, self.data, outer=False) / self.N

    def covariance(self) -> np.ndarray:
        return sample_cov_block(self, range(self.n), range(self.n))


def project(M: Union[np.ndarray, SparseSymMatrix], P: SparsityPattern) -> SparseSymMatrix:
    """P_P(M): keep the entries of M inside P, drop everything else."""
    if isinstance(M, SparseSymMatrix):
        if M.n != P.n:
            raise PatternError(f"size mismatch: {M.n} vs {P.n}")
        pos = M.pattern.locate(P.rows, P.cols)
        vals = np.where(pos >= 0, M.values[np.maximum(pos, 0)], 0.0) if M.pattern.nnz else np.zeros(P.nnz)
        return SparseSymMatrix(P, vals)
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (P.n, P.n):
        raise PatternError(f"size mismatch: {M.shape} vs n={P.n}")
    return SparseSymMatrix(P, M[P.rows, P.cols])


def is_subpattern(P: SparsityPattern, Q: SparsityPattern) -> bool:
    """True iff every entry of P is also in Q."""
    if P.n != Q.n:
        raise PatternError(f"size mismatch: {P.n} vs {Q.n}")
    return bool(np.isin(P.keys, Q.keys, assume_unique=True).all())


def _as_slice(r, n: int, what: str) -> slice:
    if isinstance(r, slice):
        r = range(*r.indices(n))
    elif isinstance(r, tuple):
        r = range(*r)
    if not isinstance(r, range) or r.step != 1:
        raise PatternError(f"{what} must be a contiguous range")
    if len(r) == 0:
        raise PatternError(f"empty {what} range")
    if r.start < 0 or r.stop > n:
        raise PatternError(f"{what} range {r.start}:{r.stop} outside [0, {n})")
    return slice(r.start, r.stop)


def _padded_chunk(A: np.ndarray, k0: int, k1: int) -> np.ndarray:
    out = np.zeros((A.shape[0], COV_SAMPLE_CHUNK))
    out[:, : k1 - k0] = A[:, k0:k1]
    return out


def _chunk_sums(P: np.ndarray) -> np.ndarray:
    """Sum over the last axis (a power of two) by halving."""
    while P.shape[-1] > 1:
        h = P.shape[-1] // 2
        P = P[..., :h] + P[..., h:]
    return P[..., 0]


def _sample_products(A: np.ndarray, B: np.ndarray, outer: bool = True) -> np.ndarray:
    """
    Sums over samples of A[i] * B[j] (all pairs), or of A[i] * B[i].

    Samples are reduced in chunks aligned to sample 0 with a fixed halving
    tree inside each chunk, so an entry comes out bit for bit the same
    whatever block it is computed in.
    """
    r, c, N = A.shape[0], B.shape[0], A.shape[1]
    out = np.zeros((r, c)) if outer else np.zeros(r)
    strip = max(1, COV_TILE_VALUES // (max(c, 1) * COV_SAMPLE_CHUNK))
    for k0 in range(0, N, COV_SAMPLE_CHUNK):
        k1 = min(N, k0 + COV_SAMPLE_CHUNK)
        Bk = _padded_chunk(B, k0, k1)
        if not outer:
            out += _chunk_sums(_padded_chunk(A, k0, k1) * Bk)
            continue
        for i0 in range(0, r, strip):
            Ak = _padded_chunk(A[i0:i0 + strip], k0, k1)
            out[i0:i0 + strip] += _chunk_sums(Ak[:, None, :] * Bk[None, :, :])
    return out


def sample_cov_block(X: SampleMatrix, rows, cols) -> np.ndarray:
    """(1/N) X[rows,:] X[cols,:]^T, formed without touching the rest of C."""
    rs = _as_slice(rows, X.n, "row")
    cs = _as_slice(cols, X.n, "column")
    return _sample_products(X.data[rs], X.data[cs]) / X.N
