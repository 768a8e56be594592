"""
Blockwise soft-thresholding of the sample covariance.

C is visited one lower-triangle block at a time, so peak working memory is
one block plus the surviving entries. Blocks are independent and may run on
a thread pool; the merge is keyed by (col, row), so the result does not
depend on block size, visit order or thread count.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .config import DEFAULT_BLOCK_SIZE
from .errors import ConfigError, NonFiniteError, NonPositiveDiagonalError, PatternError
from .sparse_sym import SampleMatrix, SparseSymMatrix, SparsityPattern, sample_cov_block

log = logging.getLogger(__name__)

MAX_EXAMPLES = 10


@dataclass(frozen=True)
class LambdaSpec:
    """Off-diagonal penalty weights: a default value plus optional per-pair overrides."""

    default: float = 0.0
    table: Optional[SparseSymMatrix] = None

    def __post_init__(self):
        if not np.isfinite(self.default) or self.default < 0:
            raise ConfigError(f"lambda must be finite and nonnegative, got {self.default!r}")
        if self.table is not None:
            off = self.table.values[self.table.pattern.offdiag_mask]
            if off.size and off.min() < 0:
                raise ConfigError("lambda table holds negative weights")

    @classmethod
    def scalar(cls, value: float) -> "LambdaSpec":
        return cls(default=float(value))

    @property
    def is_scalar(self) -> bool:
        return self.table is None or self.table.pattern.num_edges == 0

    @cached_property
    def _lookup(self) -> Optional[sp.csr_matrix]:
        # Stores 1-based indices into the table values, so explicit zero
        # weights survive scipy's sparse slicing.
        if self.is_scalar:
            return None
        P = self.table.pattern
        rows, cols = P.edges()
        idx = np.flatnonzero(P.offdiag_mask) + 1
        A = sp.coo_matrix(
            (np.concatenate([idx, idx]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(P.n, P.n),
        )
        return A.tocsr()

    def block(self, rows: slice, cols: slice) -> np.ndarray:
        """Dense weights for C[rows, cols]; the diagonal positions carry no meaning."""
        shape = (rows.stop - rows.start, cols.stop - cols.start)
        W = np.full(shape, self.default)
        if self._lookup is not None:
            sub = self._lookup[rows, cols].tocoo()
            W[sub.row, sub.col] = self.table.values[sub.data.astype(np.int64) - 1]
        return W

    def dense(self, n: int) -> np.ndarray:
        W = self.block(slice(0, n), slice(0, n))
        np.fill_diagonal(W, 0.0)
        return W

    def weight(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.block(slice(i, i + 1), slice(j, j + 1))[0, 0])


@dataclass
class ThresholdReport:
    n: int = 0
    block_size: int = DEFAULT_BLOCK_SIZE
    blocks: int = 0
    threads: int = 1
    offdiag_kept: int = 0
    ties: int = 0
    zero_weights: int = 0
    tie_examples: List[Tuple[int, int]] = field(default_factory=list)
    zero_weight_examples: List[Tuple[int, int]] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def nondegenerate(self) -> bool:
        """No ties |C_ij| = lambda_ij and no zero weights inside the prior."""
        return self.ties == 0 and self.zero_weights == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nondegenerate"] = self.nondegenerate
        return d


def soft_threshold_entry(c: float, lam: float, diagonal: bool = False) -> float:
    """Shrink an off-diagonal covariance entry toward zero by lam."""
    if lam < 0:
        raise ConfigError(f"lambda must be nonnegative, got {lam!r}")
    if diagonal:
        return c
    if c > lam:
        return c - lam
    if c < -lam:
        return c + lam
    return 0.0


def soft_threshold(C: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Entrywise soft-threshold of a block (no diagonal handling)."""
    return np.sign(C) * np.maximum(np.abs(C) - W, 0.0)


def _blocks(n: int, size: int) -> List[Tuple[int, int]]:
    nb = -(-n // size)
    return [(bi, bj) for bi in range(nb) for bj in range(bi + 1)]


def threshold_blocks(
    source: Union[SampleMatrix, np.ndarray],
    lam: LambdaSpec,
    prior: Optional[SparsityPattern] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    threads: int = 1,
) -> Tuple[SparseSymMatrix, ThresholdReport]:
    """C_H = P_H(C_lambda) with shrinkage zeros dropped, plus a report of ties and zero weights."""
    start = time.perf_counter()
    if block_size < 1:
        raise ConfigError(f"block size must be at least 1, got {block_size}")

    if isinstance(source, SampleMatrix):
        n = source.n
        diag = source.covariance_diagonal()

        def get_block(rs: slice, cs: slice) -> np.ndarray:
            return sample_cov_block(source, range(rs.start, rs.stop), range(cs.start, cs.stop))
    else:
        C = np.asarray(source, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise PatternError(f"covariance must be square, got shape {C.shape}")
        if not np.all(np.isfinite(C)):
            raise NonFiniteError("covariance contains non-finite entries")
        n = C.shape[0]
        diag = C.diagonal().copy()

        def get_block(rs: slice, cs: slice) -> np.ndarray:
            return C[rs, cs]

    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        raise NonPositiveDiagonalError(int(bad[0]), float(diag[bad[0]]))
    if prior is not None and prior.n != n:
        raise PatternError(f"prior pattern has n={prior.n}, covariance has n={n}")
    if lam.table is not None and lam.table.n != n:
        raise PatternError(f"lambda table has n={lam.table.n}, covariance has n={n}")

    prior_adj = prior.adjacency() if prior is not None else None
    tasks = _blocks(n, block_size)

    def work(task):
        bi, bj = task
        rs = slice(bi * block_size, min(n, (bi + 1) * block_size))
        cs = slice(bj * block_size, min(n, (bj + 1) * block_size))
        Cb = get_block(rs, cs)
        Wb = lam.block(rs, cs)
        Tb = soft_threshold(Cb, Wb)
        if bi == bj:
            region = np.tri(Cb.shape[0], Cb.shape[1], -1, dtype=bool)
        else:
            region = np.ones(Cb.shape, dtype=bool)
        if prior_adj is not None:
            region &= prior_adj[rs, cs].toarray() != 0
        Tb = np.where(region, Tb, 0.0)
        r, c = np.nonzero(Tb)
        tie_r, tie_c = np.nonzero(region & (np.abs(Cb) == Wb))
        zero_r, zero_c = np.nonzero(region & (Wb == 0))
        return (
            r + rs.start, c + cs.start, Tb[r, c],
            tie_r.size, list(zip((tie_r[:MAX_EXAMPLES] + rs.start).tolist(), (tie_c[:MAX_EXAMPLES] + cs.start).tolist())),
            zero_r.size, list(zip((zero_r[:MAX_EXAMPLES] + rs.start).tolist(), (zero_c[:MAX_EXAMPLES] + cs.start).tolist())),
        )

    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    report = ThresholdReport(n=n, block_size=block_size, blocks=len(tasks), threads=threads)
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [diag]
    for r, c, v, nt, te, nz, ze in results:
        rows.append(r)
        cols.append(c)
        vals.append(v)
        report.ties += nt
        report.zero_weights += nz
        report.tie_examples.extend(te[: MAX_EXAMPLES - len(report.tie_examples)])
        report.zero_weight_examples.extend(ze[: MAX_EXAMPLES - len(report.zero_weight_examples)])

    C_H = SparseSymMatrix.from_entries(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    report.offdiag_kept = C_H.pattern.num_edges
    report.seconds = time.perf_counter() - start

    log.info(
        "thresholded n=%d: kept %d off-diagonal entries (%d blocks of %d, %.3fs)",
        n, report.offdiag_kept, report.blocks, block_size, report.seconds,
    )
    if report.ties:
        log.warning("%d entries tie with their threshold (|C_ij| = lambda_ij), e.g. %s", report.ties, report.tie_examples[:3])
    if report.zero_weights:
        log.warning("%d pairs inside the prior carry zero weight, e.g. %s", report.zero_weights, report.zero_weight_examples[:3])
    return C_H, report


def threshold_covariance(
    source: Union[SampleMatrix, np.ndarray],
    lam: LambdaSpec,
    prior: Optional[SparsityPattern] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    threads: int = 1,
) -> SparseSymMatrix:
    return threshold_blocks(source, lam, prior, block_size, threads)[0]
