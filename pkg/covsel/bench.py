"""
Synthetic instances and scaling harnesses.

Random draws come from counter-based Philox streams keyed by the seed,
with the counter set to (0, 0, column, tag). A column's values depend only
on (seed, column, tag), never on n, visit order or thread count.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse.linalg import spsolve_triangular

from .barrier import factor_primal
from .chordal import build_clique_tree, fill_reducing_order, symbolic_embed
from .config import DENSE_LIMIT, STREAM_TAGS
from .dense import gl_objective, gl_reference_solve
from .errors import ConfigError, CovselError
from .newton_cg import SolverConfig, newton_solve
from .pipeline import estimate_precision
from .sparse_sym import SampleMatrix, SparseSymMatrix, SparsityPattern, project

log = logging.getLogger(__name__)

CORRUPTION = 0.3


def stream(seed: int, column: int, tag: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, column, STREAM_TAGS[tag]]))


# ------------------------------------------------------------------
# Generators
# ------------------------------------------------------------------

def _dominant_diagonal(n: int, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray) -> np.ndarray:
    a = np.abs(vals)
    return 1.0 + np.bincount(rows, a, minlength=n) + np.bincount(cols, a, minlength=n)


def gen_banded(
    n: int, bandwidth: int, seed: int, diagonal: Union[float, str] = 5.0
) -> SparseSymMatrix:
    """
    Corrupted banded matrix: off-diagonals inside the band drawn from
    U[-2, 0) and dropped with probability 0.3; the diagonal is the given
    constant or, with "dominant", 1 + the absolute row sum.
    """
    if bandwidth < 1 or bandwidth % 2 == 0 or bandwidth >= n:
        raise ConfigError(f"bandwidth must be odd and below n={n}, got {bandwidth}")
    h = (bandwidth - 1) // 2
    rows, cols, vals = [], [], []
    for j in range(n - 1):
        cnt = min(h, n - 1 - j)
        v = stream(seed, j, "values").uniform(-2.0, 0.0, size=cnt)
        keep = stream(seed, j, "corruption").random(cnt) >= CORRUPTION
        idx = np.flatnonzero(keep)
        rows.append(j + 1 + idx)
        cols.append(np.full(idx.size, j))
        vals.append(v[keep])
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    if diagonal == "dominant":
        d = _dominant_diagonal(n, rows, cols, vals)
    elif isinstance(diagonal, str):
        raise ConfigError(f"unknown diagonal option '{diagonal}'")
    else:
        d = np.full(n, float(diagonal))
    diag = np.arange(n)
    return SparseSymMatrix.from_entries(
        n, np.concatenate([diag, rows]), np.concatenate([diag, cols]), np.concatenate([d, vals])
    )


@dataclass(eq=False)
class GraphCase:
    samples: SampleMatrix
    precision: SparseSymMatrix


def gen_precision(G: SparsityPattern, seed: int) -> SparseSymMatrix:
    """Edges of G drawn from U[-1, 1], dropped with probability 0.3; diagonal 1 + absolute row sum."""
    rows, cols = G.edges()
    vals = np.empty(rows.size)
    keep = np.empty(rows.size, dtype=bool)
    # edges are stored column by column
    bounds = np.searchsorted(cols, np.arange(G.n + 1))
    for j in range(G.n):
        lo, hi = bounds[j], bounds[j + 1]
        if hi > lo:
            vals[lo:hi] = stream(seed, j, "values").uniform(-1.0, 1.0, size=hi - lo)
            keep[lo:hi] = stream(seed, j, "corruption").random(hi - lo) >= CORRUPTION
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    d = _dominant_diagonal(G.n, rows, cols, vals)
    diag = np.arange(G.n)
    return SparseSymMatrix.from_entries(
        G.n, np.concatenate([diag, rows]), np.concatenate([diag, cols]), np.concatenate([d, vals])
    )


def sample_gaussian(K: SparseSymMatrix, N: int, seed: int, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """n x N draws from N(0, K^{-1})."""
    n = K.n
    z = stream(seed, 0, "samples").standard_normal((n, N))
    if n <= dense_limit:
        L = linalg.cholesky(K.to_dense(), lower=True)
        return linalg.solve_triangular(L, z, lower=True, trans="T")
    E = symbolic_embed(K.pattern, fill_reducing_order(K.pattern))
    tree = build_clique_tree(E)
    F = factor_primal(project(K, E.Gt), tree)
    Lt = sp.csr_matrix(F.to_scipy().T)
    xp = spsolve_triangular(Lt, z, lower=False)
    x = np.empty_like(xp)
    x[tree.perm] = xp
    return x


def gen_graph_case(G: SparsityPattern, N: int, seed: int, dense_limit: int = DENSE_LIMIT) -> GraphCase:
    K = gen_precision(G, seed)
    raw = sample_gaussian(K, N, seed, dense_limit)
    return GraphCase(SampleMatrix.from_samples(raw), K)


# ------------------------------------------------------------------
# Scaling study
# ------------------------------------------------------------------

@dataclass
class ScalingRow:
    n: int
    m: int = 0
    edges: int = 0
    newton_steps: int = 0
    cg_median: float = 0.0
    gap: float = 0.0
    feas: float = 0.0
    seconds_embed: float = 0.0
    seconds_solve: float = 0.0
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class ScalingReport:
    bandwidth: int
    seed: int
    rows: List[ScalingRow] = field(default_factory=list)
    slope: Optional[float] = None

    @property
    def sizes(self) -> List[int]:
        return [r.n for r in self.rows]

    @property
    def cg_ratio(self) -> Optional[float]:
        meds = [r.cg_median for r in self.rows if r.ok and r.cg_median > 0]
        return max(meds) / min(meds) if meds else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cg_ratio"] = self.cg_ratio
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingReport":
        rows = [ScalingRow(**r) for r in data.get("rows", [])]
        return cls(data["bandwidth"], data["seed"], rows, data.get("slope"))


def fit_slope(sizes: Sequence[float], seconds: Sequence[float]) -> Optional[float]:
    """Least-squares exponent of seconds ~ n^slope."""
    if len(sizes) < 2:
        return None
    return float(np.polyfit(np.log(sizes), np.log(seconds), 1)[0])


def scaling_run(
    sizes: Sequence[int],
    bandwidth: int,
    seed: int,
    cfg: Optional[SolverConfig] = None,
    ordering: str = "natural",
    amalgamate: int = 0,
    diagonal: Union[float, str] = "dominant",
) -> ScalingReport:
    """Embed and solve one banded instance per size; sizes that fail are recorded and left out of the fit."""
    sizes = list(sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(f"sizes must be strictly increasing, got {sizes}")
    report = ScalingReport(bandwidth, seed)
    for n in sizes:
        row = ScalingRow(n)
        try:
            C = gen_banded(n, bandwidth, seed, diagonal)
            t0 = time.perf_counter()
            E = symbolic_embed(C.pattern, fill_reducing_order(C.pattern, ordering), amalgamate)
            tree = build_clique_tree(E)
            t1 = time.perf_counter()
            result = newton_solve(C, E, cfg=cfg, tree=tree)
            t2 = time.perf_counter()
        except CovselError as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            log.warning("n=%d failed: %s", n, row.error)
        else:
            rep = result.report
            row.m, row.edges = E.m, C.pattern.num_edges
            row.newton_steps, row.cg_median = rep.newton_steps, rep.cg_median
            row.gap, row.feas = rep.gap, rep.feas
            row.seconds_embed, row.seconds_solve = t1 - t0, t2 - t1
            log.info("n=%d: m=%d, %d Newton steps, %.2fs", n, E.m, rep.newton_steps, t2 - t0)
        report.rows.append(row)
    good = [r for r in report.rows if r.ok]
    report.slope = fit_slope([r.n for r in good], [r.seconds_embed + r.seconds_solve for r in good])
    return report


# ------------------------------------------------------------------
# Graph case study
# ------------------------------------------------------------------

@dataclass
class GraphCaseRow:
    variant: str
    n: int
    m: int = 0
    edges: int = 0
    seconds: float = 0.0
    gap: float = 0.0
    feas: float = 0.0
    objective: Optional[float] = None
    reference_objective: Optional[float] = None
    relative_difference: Optional[float] = None
    error: str = ""


def graph_case_run(
    G: SparsityPattern,
    N: int,
    seed: int,
    lam: float,
    cfg: Optional[SolverConfig] = None,
    dense_limit: int = DENSE_LIMIT,
) -> List[GraphCaseRow]:
    """Estimate from generated samples with no prior and with the true pattern as prior."""
    case = gen_graph_case(G, N, seed, dense_limit)
    C = case.samples.covariance() if G.n <= dense_limit else None
    rows = []
    for variant, prior in (("gl", None), ("rgl", case.precision.pattern)):
        row = GraphCaseRow(variant, G.n)
        t0 = time.perf_counter()
        try:
            result = estimate_precision(case.samples, lam, prior, cfg)
        except CovselError as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            log.warning("%s variant failed: %s", variant, row.error)
            rows.append(row)
            continue
        row.seconds = time.perf_counter() - t0
        rep = result.report.solver
        row.m, row.edges = rep.m, result.C_H.pattern.num_edges
        row.gap, row.feas = rep.gap, rep.feas
        if C is not None:
            row.objective = gl_objective(result.X, C, lam)
            ref = gl_reference_solve(C, lam, prior, limit=dense_limit)
            row.reference_objective = ref.objective
            row.relative_difference = abs(row.objective - ref.objective) / abs(ref.objective)
        rows.append(row)
    return rows
