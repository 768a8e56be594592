"""
File formats: Matrix Market coordinate symmetric matrices and patterns,
and sample files (text or SMPL binary).

Headers are validated here so errors carry line numbers; the coordinate
body itself is parsed by scipy.io.
"""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import InputFormatError
from .sparse_sym import SampleMatrix, SparseSymMatrix, SparsityPattern

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

MM_BANNER = "%%MatrixMarket matrix coordinate real symmetric"
MM_FIELDS = ("real", "integer", "pattern")
SAMPLE_MAGIC = b"SMPL"


# ------------------------------------------------------------------
# Matrix Market
# ------------------------------------------------------------------

def _check_header(path: PathLike) -> Tuple[int, int, str]:
    """Validate banner, size line and entry count; return (n, nnz, field)."""
    with open(path, "r") as fh:
        banner = fh.readline()
        tokens = banner.split()
        if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
            raise InputFormatError(path, 1, f"expected banner '{MM_BANNER}'")
        obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
        if obj != "matrix" or fmt != "coordinate":
            raise InputFormatError(path, 1, f"unsupported object/format '{obj} {fmt}'; need 'matrix coordinate'")
        if field not in MM_FIELDS:
            raise InputFormatError(path, 1, f"unsupported field '{field}'")
        if symmetry != "symmetric":
            raise InputFormatError(path, 1, f"unsupported symmetry '{symmetry}'; need 'symmetric'")

        lineno = 1
        size_line = None
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = stripped
            break
        if size_line is None:
            raise InputFormatError(path, lineno, "missing size line")
        parts = size_line.split()
        try:
            rows, cols, nnz = (int(p) for p in parts)
        except ValueError:
            raise InputFormatError(path, lineno, f"size line must hold three integers, got '{size_line}'")
        if rows != cols or rows < 0 or nnz < 0:
            raise InputFormatError(path, lineno, f"expected a square size line, got '{size_line}'")

        size_lineno = lineno
        width = 2 if field == "pattern" else 3
        count = 0
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            if len(stripped.split()) != width:
                raise InputFormatError(path, lineno, f"expected {width} fields per entry")
            count += 1
        if count != nnz:
            raise InputFormatError(path, size_lineno, f"size line announces {nnz} entries, found {count}")
    return rows, nnz, field


def _read_coo(path: PathLike) -> Tuple[int, sp.coo_matrix, str]:
    n, _, field = _check_header(path)
    try:
        A = scipy.io.mmread(str(path))
    except (ValueError, IndexError) as exc:
        raise InputFormatError(path, None, str(exc))
    A = sp.coo_matrix(A)
    if A.shape != (n, n):
        raise InputFormatError(path, None, f"body does not match size {n}x{n}")
    return n, A, field


def read_matrix_market(path: PathLike) -> SparseSymMatrix:
    """Read a symmetric coordinate file into a SparseSymMatrix."""
    n, A, _ = _read_coo(path)
    lower = A.row >= A.col
    M = SparseSymMatrix.from_entries(n, A.row[lower], A.col[lower], A.data[lower])
    log.debug("read %s: n=%d, %d stored entries", path, n, M.pattern.nnz)
    return M


def read_pattern(path: PathLike) -> SparsityPattern:
    """Read the index set of a symmetric coordinate file (any field)."""
    n, A, _ = _read_coo(path)
    return SparsityPattern.from_pairs(n, A.row, A.col)


def write_matrix_market(path: PathLike, M: SparseSymMatrix, comment: str = "") -> None:
    with open(path, "wb") as fh:
        scipy.io.mmwrite(fh, M.lower_scipy(), comment=comment, field="real", precision=17, symmetry="symmetric")


def write_pattern(path: PathLike, P: SparsityPattern, comment: str = "") -> None:
    A = sp.coo_matrix((np.ones(P.nnz), (P.rows, P.cols)), shape=(P.n, P.n))
    with open(path, "wb") as fh:
        scipy.io.mmwrite(fh, A, comment=comment, field="pattern", symmetry="symmetric")


# ------------------------------------------------------------------
# Sample files
# ------------------------------------------------------------------

def _read_samples_binary(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 20:
        raise InputFormatError(path, None, "truncated SMPL header")
    n, N = (int(v) for v in np.frombuffer(raw, dtype="<u8", count=2, offset=4))
    expected = 20 + 8 * n * N
    if len(raw) != expected:
        raise InputFormatError(path, None, f"SMPL payload holds {len(raw)} bytes, expected {expected} for n={n}, N={N}")
    values = np.frombuffer(raw, dtype="<f8", count=n * N, offset=20)
    return values.reshape((n, N), order="F")


def _read_samples_text(path: PathLike) -> np.ndarray:
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InputFormatError(path, 1, "empty sample file")
    try:
        n, N = (int(p) for p in lines[0].split())
    except ValueError:
        raise InputFormatError(path, 1, "header must be 'n N'")
    if n < 1 or N < 1:
        raise InputFormatError(path, 1, "header counts must be positive")
    body = [(i, line) for i, line in enumerate(lines[1:], start=2) if line.strip()]
    if len(body) != N:
        raise InputFormatError(path, 1, f"header announces {N} samples, found {len(body)}")
    data = np.empty((n, N), order="F")
    for k, (lineno, line) in enumerate(body):
        try:
            row = np.array(line.split(), dtype=np.float64)
        except ValueError:
            raise InputFormatError(path, lineno, "non-numeric sample value")
        if row.size != n:
            raise InputFormatError(path, lineno, f"expected {n} values, found {row.size}")
        data[:, k] = row
    return data


def read_samples(path: PathLike) -> SampleMatrix:
    """Read a sample file and center it."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    raw = _read_samples_binary(path) if head == SAMPLE_MAGIC else _read_samples_text(path)
    if not np.all(np.isfinite(raw)):
        raise InputFormatError(path, None, "non-finite sample value")
    X = SampleMatrix.from_samples(raw)
    log.debug("read %s: n=%d, N=%d", path, X.n, X.N)
    return X


def write_samples(path: PathLike, raw: np.ndarray, binary: bool = False) -> None:
    """Write an n x N array of samples (one sample per column)."""
    raw = np.asarray(raw, dtype=np.float64)
    n, N = raw.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(SAMPLE_MAGIC)
            fh.write(np.array([n, N], dtype="<u8").tobytes())
            fh.write(raw.astype("<f8").tobytes(order="F"))
    else:
        np.savetxt(path, raw.T, fmt="%.17g", header=f"{n} {N}", comments="")
