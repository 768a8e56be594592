"""
Sparse inverse covariance estimation by thresholding and max-det completion,
plus dense checkers for the conditions under which the result coincides
with the graphical lasso.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from .chordal import ChordalEmbedding, embedding_stats, fill_reducing_order, symbolic_embed
from .config import DEFAULT_BLOCK_SIZE, DEFAULT_ORDERING, DENSE_LIMIT
from .dense import (
    PatternLike,
    as_dense,
    as_mask,
    check_dense_size,
    dense_maxdet_completion,
    inverse,
)
from .errors import NonPositiveDiagonalError, NotCompletableError, OracleError, PatternError
from .newton_cg import NewtonResult, SolverConfig, SolverReport, newton_solve
from .sparse_sym import SampleMatrix, SparseSymMatrix, SparsityPattern
from .threshold import LambdaSpec, ThresholdReport, threshold_blocks

log = logging.getLogger(__name__)

ZERO_TOL = 1e-12
MAX_VIOLATIONS = 10


# ------------------------------------------------------------------
# Estimation
# ------------------------------------------------------------------

@dataclass
class EstimateReport:
    threshold: ThresholdReport
    embedding: dict
    solver: SolverReport
    seconds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold.to_dict(),
            "embedding": dict(self.embedding),
            "solver": self.solver.to_dict(),
            "seconds": dict(self.seconds),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EstimateReport":
        th = dict(data.get("threshold", {}))
        th.pop("nondegenerate", None)
        for key in ("tie_examples", "zero_weight_examples"):
            th[key] = [tuple(p) for p in th.get(key, [])]
        return cls(
            threshold=ThresholdReport(**th),
            embedding=dict(data.get("embedding", {})),
            solver=SolverReport.from_dict(data.get("solver", {})),
            seconds=dict(data.get("seconds", {})),
        )


@dataclass(eq=False)
class EstimateResult:
    X: SparseSymMatrix
    C_H: SparseSymMatrix
    embedding: ChordalEmbedding
    newton: NewtonResult
    report: EstimateReport


def estimate_precision(
    source: Union[SampleMatrix, np.ndarray],
    lam: Union[LambdaSpec, float],
    prior: Optional[SparsityPattern] = None,
    cfg: Optional[SolverConfig] = None,
    ordering: str = DEFAULT_ORDERING,
    amalgamate: int = 0,
    block_size: int = DEFAULT_BLOCK_SIZE,
    threads: int = 1,
) -> EstimateResult:
    """Threshold the covariance, embed its pattern, and solve the max-det completion."""
    if not isinstance(lam, LambdaSpec):
        lam = LambdaSpec.scalar(lam)
    t0 = time.perf_counter()
    C_H, th_report = threshold_blocks(source, lam, prior, block_size, threads)
    t1 = time.perf_counter()
    E = symbolic_embed(C_H.pattern, fill_reducing_order(C_H.pattern, ordering), amalgamate)
    t2 = time.perf_counter()
    result = newton_solve(C_H, E, cfg=cfg)
    t3 = time.perf_counter()
    report = EstimateReport(
        threshold=th_report,
        embedding=embedding_stats(E),
        solver=result.report,
        seconds={"threshold": t1 - t0, "embed": t2 - t1, "solve": t3 - t2},
    )
    log.info(
        "estimate: n=%d, %d edges, m=%d, %d Newton steps, gap=%.2e, feas=%.2e",
        C_H.n, C_H.pattern.num_edges, E.m, result.report.newton_steps, result.report.gap, result.report.feas,
    )
    return EstimateResult(result.X, C_H, E, result, report)


# ------------------------------------------------------------------
# Optimality conditions of the weighted graphical lasso
# ------------------------------------------------------------------

@dataclass
class Violation:
    clause: str
    i: int
    j: int
    amount: float


@dataclass
class KKTReport:
    ok: bool
    max_violation: float
    tol: float
    violations: List[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> dict:
        return asdict(self)


def _weights(lam: Union[LambdaSpec, float, np.ndarray], n: int) -> np.ndarray:
    if isinstance(lam, LambdaSpec):
        return lam.dense(n)
    W = np.broadcast_to(np.asarray(lam, dtype=np.float64), (n, n)).copy()
    np.fill_diagonal(W, 0.0)
    return W


def kkt_check(
    X_hat,
    C,
    lam: Union[LambdaSpec, float, np.ndarray],
    H: Optional[PatternLike] = None,
    tol: float = 1e-6,
) -> KKTReport:
    """
    Optimality of X_hat for min tr(CX) - log det X + sum lam_ij |X_ij| over X on H:
    with W = X_hat^{-1}, W_ii = C_ii; W_ij = C_ij + lam_ij sign(X_ij) where
    X_ij is nonzero; |W_ij - C_ij| <= lam_ij where it is zero (inside H).
    Entries outside H must be exactly zero.
    """
    X = as_dense(X_hat)
    C = as_dense(C)
    n = X.shape[0]
    if C.shape != X.shape:
        raise PatternError(f"size mismatch: estimate {X.shape}, covariance {C.shape}")
    check_dense_size(n)
    W = inverse(X)
    lam_d = _weights(lam, n)
    inside = as_mask(H, n) if H is not None else np.ones((n, n), dtype=bool)
    off = ~np.eye(n, dtype=bool)

    residual = np.zeros((n, n))
    clause = np.empty((n, n), dtype=object)
    d = np.abs(np.diag(W) - np.diag(C))
    residual[np.diag_indices(n)] = d
    clause[np.diag_indices(n)] = "diagonal"

    active = off & inside & (np.abs(X) >= ZERO_TOL)
    residual[active] = np.abs(W - C - lam_d * np.sign(X))[active]
    clause[active] = "active"

    inactive = off & inside & ~active
    residual[inactive] = np.maximum(np.abs(W - C) - lam_d, 0.0)[inactive]
    clause[inactive] = "inactive"

    outside = off & ~inside
    residual[outside] = np.where(X[outside] != 0.0, np.inf, 0.0)
    clause[outside] = "outside prior"

    worst = float(residual.max()) if n else 0.0
    bad_r, bad_c = np.nonzero(np.tril(residual > tol))
    order = np.argsort(-residual[bad_r, bad_c], kind="stable")[:MAX_VIOLATIONS]
    violations = [
        Violation(str(clause[bad_r[t], bad_c[t]]), int(bad_r[t]), int(bad_c[t]), float(residual[bad_r[t], bad_c[t]]))
        for t in order
    ]
    return KKTReport(ok=not violations, max_violation=worst, tol=tol, violations=violations)


# ------------------------------------------------------------------
# Inverse-consistent complements
# ------------------------------------------------------------------

def inverse_consistent_complement(M, G: PatternLike) -> np.ndarray:
    """N, zero on G, such that (M + N)^{-1} is supported on G."""
    M = as_dense(M)
    mask = as_mask(G, M.shape[0])
    W = dense_maxdet_completion(M, mask)
    return np.where(mask, 0.0, W)


@dataclass
class SignConsistency:
    ok: bool
    checked: int = 0
    violations: List[Tuple[int, int]] = field(default_factory=list)
    indeterminate: List[Tuple[int, int]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def sign_consistency_check(M, G: PatternLike, N: Optional[np.ndarray] = None) -> SignConsistency:
    """
    True iff every nonzero off-diagonal M_ij on G has the opposite sign of
    ((M + N)^{-1})_ij. Inverse entries below 1e-12 in magnitude are reported
    as indeterminate and fail the check.
    """
    M = as_dense(M)
    n = M.shape[0]
    mask = as_mask(G, n)
    if N is None:
        N = inverse_consistent_complement(M, mask)
    K = inverse(M + N)
    r, c = np.nonzero(np.tril(mask & (M != 0.0), -1))
    k = K[r, c]
    small = np.abs(k) < ZERO_TOL
    wrong = ~small & (np.sign(k) == np.sign(M[r, c]))
    result = SignConsistency(
        ok=not (small.any() or wrong.any()),
        checked=int(r.size),
        violations=list(zip(r[wrong].tolist(), c[wrong].tolist())),
        indeterminate=list(zip(r[small].tolist(), c[small].tolist())),
    )
    return result


# ------------------------------------------------------------------
# Exactness diagnostic
# ------------------------------------------------------------------

@dataclass(eq=False)
class ExactnessDiagnostic:
    """
    Checks on the thresholded matrix under which thresholding followed by
    max-det completion solves the weighted graphical lasso exactly:
    positive definiteness, sign consistency of the normalized matrix, and a
    complement-norm surrogate. The surrogate compares this instance's
    complement norm, a lower bound on the worst case over the pattern, with
    the smallest normalized threshold margin off the pattern. It can refute
    the third condition but never certify it.
    """

    C_H: SparseSymMatrix
    D: np.ndarray
    C_tilde: np.ndarray
    min_eigenvalue: float
    pd_ok: bool
    sign_ok: bool
    sign_indeterminate: int
    complement_norm: float
    rhs_beta: float
    surrogate_ok: bool
    notes: List[str] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return self.pd_ok and self.sign_ok and self.surrogate_ok

    def to_dict(self) -> dict:
        return {
            "n": self.C_H.n,
            "edges": self.C_H.pattern.num_edges,
            "min_eigenvalue": self.min_eigenvalue,
            "pd_ok": self.pd_ok,
            "sign_ok": self.sign_ok,
            "sign_indeterminate": self.sign_indeterminate,
            "complement_norm": self.complement_norm,
            "rhs_beta": self.rhs_beta,
            "surrogate_ok": self.surrogate_ok,
            "surrogate_kind": "necessary-direction surrogate, not a certificate",
            "all_ok": self.all_ok,
        }


def exactness_check(
    C,
    lam: Union[LambdaSpec, float],
    H: Optional[SparsityPattern] = None,
    limit: int = DENSE_LIMIT,
) -> ExactnessDiagnostic:
    C = as_dense(C)
    n = C.shape[0]
    check_dense_size(n, limit)
    if not isinstance(lam, LambdaSpec):
        lam = LambdaSpec.scalar(lam)
    C_H, _ = threshold_blocks(C, lam, H)
    D = C_H.diagonal()
    bad = np.flatnonzero(D <= 0)
    if bad.size:
        raise NonPositiveDiagonalError(int(bad[0]), float(D[bad[0]]))
    s = 1.0 / np.sqrt(D)
    C_tilde = C_H.to_dense() * np.outer(s, s)
    np.fill_diagonal(C_tilde, 1.0)
    notes = []

    min_eig = float(np.linalg.eigvalsh(C_tilde)[0])
    pd_ok = min_eig > 0.0
    if not pd_ok:
        notes.append(f"thresholded matrix is not positive definite (smallest eigenvalue {min_eig:.3e})")

    G = C_H.pattern
    try:
        N = inverse_consistent_complement(C_tilde, G)
    except (NotCompletableError, OracleError) as exc:
        notes.append(f"no inverse-consistent complement: {exc}")
        sign_ok, indeterminate, complement_norm = False, 0, float("inf")
    else:
        sc = sign_consistency_check(C_tilde, G, N)
        sign_ok, indeterminate = sc.ok, len(sc.indeterminate)
        complement_norm = float(np.abs(N).max()) if N.size else 0.0
        if sc.violations:
            notes.append(f"sign consistency fails at {sc.violations[:3]}")

    lam_d = lam.dense(n)
    outside = ~G.to_mask() & ~np.eye(n, dtype=bool)
    if H is not None:
        outside &= H.to_mask()
    if outside.any():
        margin = (lam_d - np.abs(C)) / np.sqrt(np.outer(np.diag(C), np.diag(C)))
        rhs_beta = float(margin[outside].min())
    else:
        rhs_beta = float("inf")
    surrogate_ok = complement_norm <= rhs_beta
    if not surrogate_ok:
        notes.append(f"complement norm {complement_norm:.3e} exceeds the threshold margin {rhs_beta:.3e}")

    return ExactnessDiagnostic(
        C_H=C_H,
        D=D,
        C_tilde=C_tilde,
        min_eigenvalue=min_eig,
        pd_ok=pd_ok,
        sign_ok=sign_ok,
        sign_indeterminate=indeterminate,
        complement_norm=complement_norm,
        rhs_beta=rhs_beta,
        surrogate_ok=surrogate_ok,
        notes=notes,
    )
