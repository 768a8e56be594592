"""
Dual Newton-CG for max-det completion on a chordal embedding.

    minimize  g(y) = f*(C - A(y))   over y in R^m

where C is the thresholded matrix placed on the embedding (zero on the m
added edges) and A spans the added edges. At the minimizer the primal
matrix X = -grad f*(C - A(y)) vanishes on the added edges, so it is
supported on the original pattern and P(X^{-1}) matches C there.
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .barrier import complete_factor, factor_primal, hess_fstar_mvp, primal_matrix
from .chordal import ChordalEmbedding, CliqueTree, EdgeBasis, build_clique_tree, edge_basis
from .config import DENSE_LIMIT
from .dense import cholesky_or_raise, logdet
from .errors import (
    ConfigError,
    InfeasibleStartError,
    NotCompletableError,
    NotConvergedError,
    NotPositiveDefiniteError,
    PatternError,
    StallError,
)
from .sparse_sym import SparseSymMatrix, is_subpattern, project

log = logging.getLogger(__name__)

PRECONDITIONERS = ("none", "jacobi")
DENSE_HESSIAN_LIMIT = 200


# ------------------------------------------------------------------
# Configuration
# ------------------------------------------------------------------

@dataclass
class SolverConfig:
    newton_tol: float = 1e-7
    max_newton: int = 50
    armijo: float = 0.01
    backtrack: float = 0.5
    min_step: float = 1e-16
    cg_max_iter: int = 500
    cg_tol_max: float = 0.1
    cg_tol_min: float = 1e-12
    preconditioner: str = "none"
    diagnostics: bool = False
    condition_iters: int = 300
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.armijo < 0.5:
            raise ConfigError(f"armijo must lie in (0, 0.5), got {self.armijo}")
        if not 0.0 < self.backtrack < 1.0:
            raise ConfigError(f"backtrack must lie in (0, 1), got {self.backtrack}")
        if self.newton_tol <= 0 or self.min_step <= 0:
            raise ConfigError("newton_tol and min_step must be positive")
        if self.max_newton < 1 or self.cg_max_iter < 1 or self.condition_iters < 1:
            raise ConfigError("iteration caps must be at least 1")
        if not 0.0 < self.cg_tol_min <= self.cg_tol_max < 1.0:
            raise ConfigError("need 0 < cg_tol_min <= cg_tol_max < 1")
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigError(f"unknown preconditioner '{self.preconditioner}'; choose from {PRECONDITIONERS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        valid = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in valid})

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SolverConfig":
        try:
            with open(path, "r") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def cg_tolerance(self, previous_decrement: Optional[float]) -> float:
        """Forcing term min(0.1, sqrt(delta_prev)), clamped to [cg_tol_min, cg_tol_max]."""
        if previous_decrement is None:
            return self.cg_tol_max
        tol = min(self.cg_tol_max, math.sqrt(previous_decrement))
        return max(self.cg_tol_min, tol)


# ------------------------------------------------------------------
# Problem and state
# ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DualProblem:
    C: SparseSymMatrix
    embedding: ChordalEmbedding
    tree: CliqueTree
    basis: EdgeBasis

    @classmethod
    def build(
        cls,
        C: SparseSymMatrix,
        E: ChordalEmbedding,
        basis: Optional[EdgeBasis] = None,
        tree: Optional[CliqueTree] = None,
    ) -> "DualProblem":
        if C.n != E.n:
            raise PatternError(f"matrix has n={C.n}, embedding has n={E.n}")
        if not is_subpattern(C.pattern, E.Gt):
            raise PatternError("matrix pattern is not contained in the chordal embedding")
        C_t = project(C, E.Gt)
        basis = basis if basis is not None else edge_basis(E)
        if basis.m and np.any(C_t.values[basis.gt_pos] != 0.0):
            raise PatternError("matrix has nonzero values on added edges")
        tree = tree if tree is not None else build_clique_tree(E)
        return cls(C_t, E, tree, basis)

    @property
    def n(self) -> int:
        return self.C.n

    @property
    def m(self) -> int:
        return self.basis.m

    def dual_point(self, y: np.ndarray) -> SparseSymMatrix:
        """S = C - A(y)."""
        values = self.C.values.copy()
        values[self.basis.gt_pos] -= self.basis.scale * y
        return SparseSymMatrix(self.C.pattern, values)


@dataclass(eq=False)
class DualState:
    y: np.ndarray
    S: SparseSymMatrix
    factor: object
    g: float
    X: SparseSymMatrix
    grad: np.ndarray


def eval_state(problem: DualProblem, y: np.ndarray) -> DualState:
    """g(y) and its gradient A^T(X); raises NotCompletableError outside dom g."""
    y = np.asarray(y, dtype=np.float64)
    S = problem.dual_point(y)
    factor = complete_factor(S, problem.tree)
    X = primal_matrix(factor)
    grad = problem.basis.adjoint(X)
    return DualState(y, S, factor, problem.n + factor.logdet, X, grad)


def hess_g_mvp(problem: DualProblem, state: DualState, v: np.ndarray) -> np.ndarray:
    """A^T(hess f*(S)[A(v)])."""
    if problem.m == 0:
        return np.zeros(0)
    return problem.basis.adjoint(hess_fstar_mvp(state.factor, problem.basis.apply(v)))


def jacobi_diagonal(problem: DualProblem, state: DualState) -> np.ndarray:
    """Hessian diagonal estimate X_ii X_jj + X_ij^2 per added edge."""
    B = problem.basis
    X = state.X
    d = X.diagonal()
    xij = X.values[B.gt_pos]
    return d[B.rows] * d[B.cols] + xij * xij


# ------------------------------------------------------------------
# Conjugate gradients
# ------------------------------------------------------------------

@dataclass
class CGResult:
    x: np.ndarray
    iters: int
    residuals: List[float]
    breakdown: bool = False
    converged: bool = False


def cg_solve(
    mvp: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float,
    max_iter: int,
    precond: Optional[np.ndarray] = None,
) -> CGResult:
    """Conjugate gradients from the origin; stops at ||r|| <= tol ||rhs|| or max_iter."""
    rhs = np.asarray(rhs, dtype=np.float64)
    x = np.zeros_like(rhs)
    r = rhs.copy()
    bnorm = float(np.linalg.norm(rhs))
    residuals = [bnorm]
    if bnorm == 0.0:
        return CGResult(x, 0, residuals, converged=True)
    z = r / precond if precond is not None else r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        Ap = mvp(p)
        pAp = float(p @ Ap)
        if not pAp > 0.0:
            log.debug("CG breakdown at iteration %d (p.Ap = %.3e)", it, pAp)
            return CGResult(x, it - 1, residuals, breakdown=True)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        residuals.append(rnorm)
        if rnorm <= tol * bnorm:
            return CGResult(x, it, residuals, converged=True)
        z = r / precond if precond is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(x, max_iter, residuals)


# ------------------------------------------------------------------
# Line search
# ------------------------------------------------------------------

def line_search(
    problem: DualProblem, state: DualState, dy: np.ndarray, cfg: SolverConfig
) -> Tuple[float, DualState]:
    """First alpha in {1, rho, rho^2, ...} meeting the Armijo condition; infeasible trials backtrack."""
    slope = float(dy @ state.grad)
    if not slope < 0.0:
        raise ValueError(f"not a descent direction (slope {slope:.3e})")
    alpha = 1.0
    while alpha >= cfg.min_step:
        try:
            trial = eval_state(problem, state.y + alpha * dy)
        except NotCompletableError as exc:
            log.debug("trial step %.3e left the domain (clique %d)", alpha, exc.clique)
        else:
            if trial.g <= state.g + cfg.armijo * alpha * slope:
                return alpha, trial
        alpha *= cfg.backtrack
    raise StallError(f"no admissible step above {cfg.min_step:g}")


# ------------------------------------------------------------------
# Reports
# ------------------------------------------------------------------

@dataclass
class HypothesisMonitor:
    """Quantities bounding the Hessian condition number along the iterates."""

    inner_products: List[float] = field(default_factory=list)
    objectives: List[float] = field(default_factory=list)
    phi_max: float = 0.0
    lambda_max_x0: float = 0.0
    lambda_min_xhat: float = 0.0
    bound: float = 0.0
    satisfied: bool = True
    conditions: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HypothesisMonitor":
        valid = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in valid})


@dataclass
class SolverReport:
    n: int = 0
    m: int = 0
    newton_steps: int = 0
    cg_iters: List[int] = field(default_factory=list)
    decrements: List[float] = field(default_factory=list)
    step_sizes: List[float] = field(default_factory=list)
    fallbacks: List[bool] = field(default_factory=list)
    converged: bool = False
    gap: float = 0.0
    feas: float = 0.0
    dual_objective: float = 0.0
    primal_objective: Optional[float] = None
    inner_product: float = 0.0
    seconds: Dict[str, float] = field(default_factory=dict)
    monitor: Optional[HypothesisMonitor] = None

    @property
    def cg_total(self) -> int:
        return int(sum(self.cg_iters))

    @property
    def cg_median(self) -> float:
        return float(np.median(self.cg_iters)) if self.cg_iters else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cg_total"] = self.cg_total
        d["cg_median"] = self.cg_median
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SolverReport":
        valid = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in valid}
        if isinstance(kwargs.get("monitor"), dict):
            kwargs["monitor"] = HypothesisMonitor.from_dict(kwargs["monitor"])
        return cls(**kwargs)


@dataclass(eq=False)
class NewtonResult:
    X: SparseSymMatrix
    y: np.ndarray
    report: SolverReport
    state: DualState = field(repr=False)
    iterates: List[np.ndarray] = field(default_factory=list, repr=False)


def _finish_report(problem: DualProblem, state: DualState, report: SolverReport) -> SparseSymMatrix:
    """Fill gap, feas and objectives; return X projected onto the original pattern."""
    G = problem.embedding.G
    X_G = project(state.X, G)
    n = problem.n
    B = problem.basis
    report.feas = float(np.abs(state.X.values[B.gt_pos]).max()) if B.m else 0.0
    report.inner_product = problem.C.inner(X_G)
    report.gap = abs(report.inner_product - n) / n if n else 0.0
    report.dual_objective = state.g
    try:
        ld = _sparse_logdet(X_G, problem.tree)
    except NotPositiveDefiniteError:
        report.primal_objective = None
    else:
        report.primal_objective = report.inner_product - ld
    return X_G


def _sparse_logdet(X: SparseSymMatrix, tree: CliqueTree) -> float:
    return factor_primal(project(X, tree.pattern), tree).logdet


# ------------------------------------------------------------------
# Solver
# ------------------------------------------------------------------

def newton_solve(
    C: SparseSymMatrix,
    E: ChordalEmbedding,
    basis: Optional[EdgeBasis] = None,
    cfg: Optional[SolverConfig] = None,
    tree: Optional[CliqueTree] = None,
) -> NewtonResult:
    """
    Minimize g from y = 0. Each step solves the Newton system by CG with an
    adaptive tolerance, falls back to steepest descent when CG breaks down,
    and backtracks. Stops once the decrement |dy . grad| drops below
    newton_tol; that last direction is still applied when it passes the
    Armijo test at full step.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    problem = DualProblem.build(C, E, basis, tree)
    t_setup = time.perf_counter() - t0
    report = SolverReport(n=problem.n, m=problem.m)
    report.seconds["setup"] = t_setup

    t1 = time.perf_counter()
    try:
        state = eval_state(problem, np.zeros(problem.m))
    except NotCompletableError as exc:
        raise InfeasibleStartError(exc)
    initial = state
    iterates = [state.y.copy()]
    monitor = HypothesisMonitor() if cfg.diagnostics else None
    if monitor is not None:
        _monitor_iterate(monitor, problem, state, initial, cfg)

    def finish(converged: bool) -> NewtonResult:
        report.converged = converged
        X_G = _finish_report(problem, state, report)
        report.seconds["solve"] = time.perf_counter() - t1
        if monitor is not None:
            _close_monitor(monitor, problem, initial, state)
            report.monitor = monitor
        return NewtonResult(X_G, state.y, report, state, iterates)

    if problem.m == 0:
        log.info("embedding is the original pattern; closed-form completion, 0 Newton steps")
        return finish(True)

    precond = None
    prev_dec: Optional[float] = None
    for k in range(cfg.max_newton):
        if cfg.preconditioner == "jacobi":
            precond = jacobi_diagonal(problem, state)
        tol = cfg.cg_tolerance(prev_dec)
        cg = cg_solve(lambda v: hess_g_mvp(problem, state, v), -state.grad, tol, cfg.cg_max_iter, precond)
        dy = cg.x
        stationary = cg.converged and not state.grad.any()
        fallback = cg.breakdown or not (stationary or float(dy @ state.grad) < 0.0)
        if fallback:
            log.warning("Newton step %d: CG direction untrusted, taking a steepest-descent step", k)
            dy = -state.grad
        dec = abs(float(dy @ state.grad))
        report.cg_iters.append(cg.iters)
        report.decrements.append(dec)
        report.fallbacks.append(fallback)
        report.newton_steps += 1

        if dec < cfg.newton_tol:
            polished = _polish(problem, state, dy, cfg)
            if polished is not None:
                state = polished
                iterates.append(state.y.copy())
                if monitor is not None:
                    _monitor_iterate(monitor, problem, state, initial, cfg)
            report.step_sizes.append(1.0 if polished is not None else 0.0)
            log.info("Newton step %d: g=%.12g delta=%.3e cg=%d (converged)", k, state.g, dec, cg.iters)
            return finish(True)

        try:
            alpha, new_state = line_search(problem, state, dy, cfg)
        except StallError as exc:
            report.step_sizes.append(0.0)
            result = finish(False)
            raise StallError(f"Newton step {k}: {exc}", result)
        report.step_sizes.append(alpha)
        log.info("Newton step %d: g=%.12g delta=%.3e cg=%d alpha=%g", k, new_state.g, dec, cg.iters, alpha)
        state = new_state
        iterates.append(state.y.copy())
        if monitor is not None:
            _monitor_iterate(monitor, problem, state, initial, cfg)
        prev_dec = dec

    result = finish(False)
    raise NotConvergedError(f"no convergence within {cfg.max_newton} Newton steps", result)


def _polish(problem: DualProblem, state: DualState, dy: np.ndarray, cfg: SolverConfig) -> Optional[DualState]:
    """The state after the terminating direction at full step, if feasible and Armijo-admissible."""
    try:
        trial = eval_state(problem, state.y + dy)
    except NotCompletableError:
        return None
    if trial.g <= state.g + cfg.armijo * float(dy @ state.grad):
        return trial
    return None


# ------------------------------------------------------------------
# Condition estimates and diagnostics
# ------------------------------------------------------------------

@dataclass
class ConditionEstimate:
    kappa: float
    lambda_max: float
    lambda_min: float
    converged: bool = True


def dense_hessian(problem: DualProblem, state: DualState) -> np.ndarray:
    """m x m Hessian of g assembled column by column."""
    m = problem.m
    H = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        H[:, j] = hess_g_mvp(problem, state, e)
    return 0.5 * (H + H.T)


def estimate_condition(
    problem: DualProblem, state: DualState, iters: int = 300, seed: int = 0
) -> ConditionEstimate:
    """Extremal eigenvalues of the Hessian of g: dense for small m, Lanczos otherwise."""
    m = problem.m
    if m < 1:
        raise ConfigError("condition estimate needs at least one added edge")
    if m <= DENSE_HESSIAN_LIMIT:
        ev = np.linalg.eigvalsh(dense_hessian(problem, state))
        return ConditionEstimate(float(ev[-1] / ev[0]), float(ev[-1]), float(ev[0]))

    op = LinearOperator((m, m), matvec=lambda v: hess_g_mvp(problem, state, np.ravel(v)), dtype=np.float64)
    v0 = np.random.default_rng(seed).standard_normal(m)
    converged = True
    extremes = []
    for which in ("LA", "SA"):
        try:
            vals = eigsh(op, k=1, which=which, v0=v0, maxiter=iters, tol=1e-8, return_eigenvectors=False)
            extremes.append(float(vals[0]))
        except ArpackNoConvergence as exc:
            converged = False
            partial = exc.eigenvalues
            extremes.append(float(partial[0]) if len(partial) else float("nan"))
    lmax, lmin = extremes
    if not converged:
        # widen the interval by 10% on each side
        lmax, lmin = 1.1 * lmax, 0.9 * lmin
        log.warning("condition estimate did not converge in %d Lanczos iterations", iters)
    return ConditionEstimate(lmax / lmin, lmax, lmin, converged)


def logdet_divergence(M: np.ndarray) -> float:
    """tr M - log det M - n for symmetric PD M."""
    M = np.asarray(M, dtype=np.float64)
    return float(np.trace(M) - logdet(M) - M.shape[0])


def relative_logdet_divergence(A: np.ndarray, B: np.ndarray) -> float:
    """The divergence of A B^{-1}, computed without forming the product."""
    L = cholesky_or_raise(B, "reference matrix")
    n = A.shape[0]
    Linv = np.linalg.solve(L, np.eye(n))
    return logdet_divergence(Linv @ A @ Linv.T)


def extreme_eigenvalue(M: SparseSymMatrix, largest: bool, seed: int = 0) -> float:
    if M.n <= DENSE_LIMIT:
        ev = np.linalg.eigvalsh(M.to_dense())
        return float(ev[-1] if largest else ev[0])
    v0 = np.random.default_rng(seed).standard_normal(M.n)
    vals = eigsh(M.to_scipy(), k=1, which="LA" if largest else "SA", v0=v0, return_eigenvectors=False)
    return float(vals[0])


def condition_bound(phi_max: float, lambda_max_x0: float, lambda_min_xhat: float) -> float:
    return 4.0 * (1.0 + phi_max ** 2 * lambda_max_x0 / lambda_min_xhat) ** 2


def _monitor_iterate(
    monitor: HypothesisMonitor, problem: DualProblem, state: DualState, initial: DualState, cfg: SolverConfig
) -> None:
    monitor.inner_products.append(float(state.grad @ (state.y - initial.y)))
    monitor.objectives.append(state.g)
    if problem.m:
        est = estimate_condition(problem, state, cfg.condition_iters, cfg.seed)
        monitor.conditions.append(est.kappa)


def _close_monitor(monitor: HypothesisMonitor, problem: DualProblem, initial: DualState, final: DualState) -> None:
    monitor.phi_max = initial.g - final.g
    monitor.lambda_max_x0 = extreme_eigenvalue(initial.X, largest=True)
    monitor.lambda_min_xhat = extreme_eigenvalue(final.X, largest=False)
    monitor.bound = condition_bound(monitor.phi_max, monitor.lambda_max_x0, monitor.lambda_min_xhat)
    tol = 1e-12 * max(1.0, abs(initial.g))
    monitor.satisfied = all(
        ip <= monitor.phi_max + tol and g <= initial.g + tol
        for ip, g in zip(monitor.inner_products, monitor.objectives)
    )
    if not monitor.satisfied:
        log.warning("Newton iterates left the region where the condition bound is guaranteed")


def logdet_divergence_bounds(problem: DualProblem, result: NewtonResult) -> List[Tuple[float, float]]:
    """
    Per iterate X: (divergence of X_hat X^{-1}, divergence of X X0^{-1}).
    Along iterates that satisfy the monitored hypothesis these stay below
    phi_max and 2 phi_max respectively. Dense; small n only.
    """
    if problem.n > DENSE_LIMIT:
        raise ConfigError(f"divergence bounds are dense; n={problem.n} exceeds {DENSE_LIMIT}")
    X_hat = result.state.X.to_dense()
    X0 = eval_state(problem, np.zeros(problem.m)).X.to_dense()
    out = []
    for y in result.iterates:
        X = eval_state(problem, y).X.to_dense()
        out.append((relative_logdet_divergence(X_hat, X), relative_logdet_divergence(X, X0)))
    return out
