"""
covsel - sparse inverse covariance estimation at scale

Soft-threshold the sample covariance block by block, then solve the
resulting max-det matrix completion with a dual Newton-CG method on a
chordal embedding. Dense checkers cover the small-n diagnostics.
"""

__version__ = "0.1.0"

from .errors import CovselError
from .newton_cg import SolverConfig, newton_solve
from .pipeline import estimate_precision, exactness_check, kkt_check
from .sparse_sym import SampleMatrix, SparseSymMatrix, SparsityPattern
from .threshold import LambdaSpec, threshold_covariance

__all__ = [
    "CovselError",
    "LambdaSpec",
    "SampleMatrix",
    "SolverConfig",
    "SparseSymMatrix",
    "SparsityPattern",
    "estimate_precision",
    "exactness_check",
    "kkt_check",
    "newton_solve",
    "threshold_covariance",
]
