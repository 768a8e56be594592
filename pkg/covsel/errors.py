"""
Exception hierarchy for covsel.

Everything raised on purpose derives from CovselError so the CLI can map
failures onto exit codes in one place.
"""

from typing import Optional


class CovselError(Exception):
    """Base class for all covsel failures."""


class PatternError(CovselError, ValueError):
    """Index out of range, size mismatch, or an otherwise invalid pattern."""


class NonFiniteError(CovselError, ValueError):
    """NaN or infinite values where finite data is required."""


class NonPositiveDiagonalError(CovselError, ValueError):
    """A covariance diagonal entry is zero or negative."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"diagonal entry {index} is {value!r}; strictly positive diagonals are required")


class ConfigError(CovselError, ValueError):
    """Invalid configuration value."""


class InputFormatError(CovselError, ValueError):
    """Malformed input file, located by path and 1-based line number."""

    def __init__(self, path: str, line: Optional[int], message: str):
        self.path = str(path)
        self.line = line
        self.message = message
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class NotPositiveDefiniteError(CovselError, ArithmeticError):
    """A Cholesky pivot was not positive; the matrix lies outside the cone interior."""

    def __init__(self, clique: int, message: str = ""):
        self.clique = clique
        text = message or "matrix is not positive definite"
        if clique >= 0:
            text = f"{text} (clique {clique})"
        super().__init__(text)


class NotCompletableError(CovselError, ArithmeticError):
    """Some clique submatrix is not positive definite, so no PD completion exists."""

    def __init__(self, clique: int, message: str = ""):
        self.clique = clique
        text = message or "matrix has no positive definite completion"
        if clique >= 0:
            text = f"{text} (clique {clique})"
        super().__init__(text)


class InfeasibleStartError(CovselError):
    """The starting dual point C - A(0) is not PD-completable."""

    def __init__(self, cause: NotCompletableError):
        self.cause = cause
        super().__init__(
            "thresholded matrix not PD-completable: the positivity and sign "
            f"conditions for exact thresholding likely fail ({cause})"
        )


class NotConvergedError(CovselError):
    """The Newton iteration stopped without meeting its tolerance."""

    def __init__(self, message: str, result=None):
        self.result = result
        super().__init__(message)


class StallError(NotConvergedError):
    """Backtracking found no admissible step above the minimum step size."""


class OracleError(CovselError):
    """A dense reference computation refused its input or hit its iteration cap."""
