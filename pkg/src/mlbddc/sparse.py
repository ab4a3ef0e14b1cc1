"""CSR matrix kernels and direct factorizations.

Everything downstream (assembly, substructuring, the BDDC levels) talks to
sparse matrices through this module. Factorizations go dense below a size
threshold (Cholesky for SPD, Bunch-Kaufman sytrf for symmetric indefinite)
and through SuperLU above it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.linalg import get_lapack_funcs

from .errors import NotPositiveDefiniteError, NumericalError, SingularMatrixError

# Above this order, factorizations switch from dense LAPACK to SuperLU.
DENSE_THRESHOLD = 2000

# A factor-solve whose relative residual exceeds this gets one step of
# iterative refinement.
REFINE_TOL = 1e-10


@dataclass
class SparseMatrix:
    """CSR storage. Symmetric matrices store both triangles; the flag only
    asserts that the stored entries are symmetric."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    symmetric: bool = False
    _csr: scipy.sparse.csr_matrix | None = field(default=None, repr=False, compare=False)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_scipy(cls, mat, symmetric: bool = False) -> "SparseMatrix":
        csr = scipy.sparse.csr_matrix(mat)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(
            n_rows=csr.shape[0],
            n_cols=csr.shape[1],
            row_offsets=np.asarray(csr.indptr, dtype=np.int64),
            col_indices=np.asarray(csr.indices, dtype=np.int64),
            values=np.asarray(csr.data, dtype=np.float64),
            symmetric=symmetric,
        )

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals, symmetric: bool = False) -> "SparseMatrix":
        coo = scipy.sparse.coo_matrix(
            (np.asarray(vals, dtype=np.float64), (rows, cols)), shape=(n_rows, n_cols)
        )
        return cls.from_scipy(coo, symmetric=symmetric)

    @classmethod
    def from_dense(cls, arr, symmetric: bool = False) -> "SparseMatrix":
        return cls.from_scipy(scipy.sparse.csr_matrix(np.asarray(arr, dtype=np.float64)),
                              symmetric=symmetric)

    # -- views -------------------------------------------------------------

    def scipy_csr(self) -> scipy.sparse.csr_matrix:
        if self._csr is None:
            self._csr = scipy.sparse.csr_matrix(
                (self.values, self.col_indices, self.row_offsets),
                shape=(self.n_rows, self.n_cols),
            )
        return self._csr

    def to_dense(self) -> np.ndarray:
        return np.asarray(self.scipy_csr().todense())

    def to_coo(self):
        coo = self.scipy_csr().tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1]) if self.n_rows else 0

    def diagonal(self) -> np.ndarray:
        return self.scipy_csr().diagonal()

    def extract(self, rows, cols) -> "SparseMatrix":
        """Submatrix on the given row/column index lists."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        sub = self.scipy_csr()[rows, :][:, cols]
        same = (
            self.symmetric
            and rows.shape == cols.shape
            and bool(np.array_equal(rows, cols))
        )
        return SparseMatrix.from_scipy(sub, symmetric=same)

    # -- checks ------------------------------------------------------------

    def validate(self) -> None:
        n, m = self.n_rows, self.n_cols
        if n < 0 or m < 0:
            raise ValueError(f"negative dimensions ({n}, {m})")
        if len(self.row_offsets) != n + 1:
            raise ValueError(f"row_offsets length {len(self.row_offsets)} != n_rows+1 = {n + 1}")
        if self.row_offsets[0] != 0:
            raise ValueError("row_offsets must start at 0")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        nnz = int(self.row_offsets[-1]) if n else 0
        if len(self.col_indices) != nnz or len(self.values) != nnz:
            raise ValueError("col_indices/values length disagrees with row_offsets")
        if nnz:
            if self.col_indices.min() < 0 or self.col_indices.max() >= m:
                raise ValueError("column index out of range")
            for r in range(n):
                lo, hi = self.row_offsets[r], self.row_offsets[r + 1]
                if np.any(np.diff(self.col_indices[lo:hi]) <= 0):
                    raise ValueError(f"column indices not strictly increasing in row {r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix values must be finite")
        if self.symmetric:
            if n != m:
                raise ValueError("symmetric flag on a non-square matrix")
            a = self.scipy_csr()
            if (a != a.T).nnz != 0:
                raise ValueError("symmetric flag set but stored entries are not symmetric")

    # -- products ----------------------------------------------------------

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.n_cols:
            raise ValueError(f"matvec shape mismatch: matrix {self.n_rows}x{self.n_cols}, vector {x.shape}")
        return self.scipy_csr() @ x

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        """Transpose product A^T x."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.n_rows:
            raise ValueError(f"rmatvec shape mismatch: matrix {self.n_rows}x{self.n_cols}, vector {x.shape}")
        return self.scipy_csr().T @ x


def matvec(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    return a.matvec(x)


# -- factorization ----------------------------------------------------------

KIND_SPD = "spd"
KIND_SYMMETRIC_INDEFINITE = "symmetric-indefinite"


@dataclass
class Factorization:
    """Opaque handle around a dense LAPACK or SuperLU factorization.

    `ordering` carries the fill-reducing permutation when the payload does
    not manage its own (dense paths use none; SuperLU orders internally).
    """

    kind: str
    n: int
    method: str
    matrix: SparseMatrix
    ordering: np.ndarray | None
    _payload: object = field(repr=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b for one rhs vector or a block of rhs columns.

        One iterative-refinement step is applied to any column whose
        relative residual comes back above REFINE_TOL.
        """
        b = np.asarray(b, dtype=np.float64)
        single = b.ndim == 1
        if b.shape[0] != self.n:
            raise ValueError(f"rhs length {b.shape[0]} != matrix order {self.n}")
        if self.n == 0:
            return b.copy()
        bb = b.reshape(self.n, -1)
        x = self._raw_solve(bb)
        # residual check + at most one refinement pass
        r = bb - self.matrix.scipy_csr() @ x
        bnorm = np.linalg.norm(bb, axis=0)
        rnorm = np.linalg.norm(r, axis=0)
        bad = rnorm > REFINE_TOL * np.where(bnorm > 0, bnorm, 1.0)
        if np.any(bad):
            x[:, bad] += self._raw_solve(r[:, bad])
        return x[:, 0] if single else x.reshape(b.shape)

    def _raw_solve(self, bb: np.ndarray) -> np.ndarray:
        if self.method == "cholesky":
            return scipy.linalg.cho_solve(self._payload, bb)
        if self.method == "bunch-kaufman":
            ldu, ipiv, sytrs = self._payload
            x, info = sytrs(ldu, ipiv, bb, lower=1)
            if info != 0:
                raise NumericalError(f"sytrs failed with info={info}")
            return np.asarray(x, dtype=np.float64).reshape(bb.shape)
        if self.method == "splu":
            return self._payload.solve(bb)
        raise NumericalError(f"unknown factorization method {self.method!r}")


def factorize(a: SparseMatrix, kind: str = KIND_SPD,
              dense_threshold: int | None = None) -> Factorization:
    """Factorize a symmetric matrix for repeated solves.

    kind="spd" expects positive definiteness and raises
    NotPositiveDefiniteError when a non-positive pivot shows up (dense
    path); kind="symmetric-indefinite" takes any nonsingular symmetric
    matrix. Exactly singular input raises SingularMatrixError.
    """
    if kind not in (KIND_SPD, KIND_SYMMETRIC_INDEFINITE):
        raise ValueError(f"unknown factorization kind {kind!r}")
    if a.n_rows != a.n_cols:
        raise ValueError(f"cannot factorize non-square matrix {a.n_rows}x{a.n_cols}")
    if not a.symmetric:
        s = a.scipy_csr()
        if (s != s.T).nnz != 0:
            raise ValueError("factorize requires a symmetric matrix")
    n = a.n_rows
    if n == 0:
        return Factorization(kind=kind, n=0, method="empty", matrix=a,
                             ordering=None, _payload=None)
    threshold = DENSE_THRESHOLD if dense_threshold is None else dense_threshold
    if n <= threshold:
        dense = a.to_dense()
        if kind == KIND_SPD:
            try:
                payload = scipy.linalg.cho_factor(dense, lower=True)
            except scipy.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError(f"matrix is not positive definite: {exc}") from exc
            return Factorization(kind=kind, n=n, method="cholesky", matrix=a,
                                 ordering=None, _payload=payload)
        sytrf, sytrs = get_lapack_funcs(("sytrf", "sytrs"), (dense,))
        ldu, ipiv, info = sytrf(dense, lower=1)
        if info > 0:
            raise SingularMatrixError(f"singular pivot block at index {info} in sytrf")
        if info < 0:
            raise NumericalError(f"sytrf illegal argument {-info}")
        return Factorization(kind=kind, n=n, method="bunch-kaufman", matrix=a,
                             ordering=None, _payload=(ldu, ipiv, sytrs))
    try:
        lu = scipy.sparse.linalg.splu(a.scipy_csr().tocsc())
    except RuntimeError as exc:
        if "singular" in str(exc).lower():
            raise SingularMatrixError(str(exc)) from exc
        raise NumericalError(str(exc)) from exc
    return Factorization(kind=kind, n=n, method="splu", matrix=a,
                         ordering=None, _payload=lu)


def solve(fact: Factorization, b: np.ndarray) -> np.ndarray:
    return fact.solve(b)


# -- tridiagonal eigenvalues --------------------------------------------------

def tridiag_eigenvalues(diag, offdiag) -> np.ndarray:
    """Eigenvalues of a symmetric tridiagonal matrix, ascending."""
    d = np.asarray(diag, dtype=np.float64)
    e = np.asarray(offdiag, dtype=np.float64)
    if d.ndim != 1 or e.ndim != 1:
        raise ValueError("diag and offdiag must be 1-D")
    if d.size == 0:
        raise ValueError("empty diagonal")
    if e.size != d.size - 1:
        raise ValueError(f"offdiag length {e.size} != diag length - 1 = {d.size - 1}")
    if d.size == 1:
        return d.copy()
    return scipy.linalg.eigh_tridiagonal(d, e, eigvals_only=True)


# -- MatrixMarket dump --------------------------------------------------------

def write_matrix_market(a: SparseMatrix, path, comment: str = "") -> None:
    """ASCII MatrixMarket coordinate dump, 1-based indices. Symmetric
    matrices write the lower triangle only."""
    rows, cols, vals = a.to_coo()
    sym = "symmetric" if a.symmetric else "general"
    if a.symmetric:
        keep = rows >= cols
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    order = np.lexsort((rows, cols))
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {sym}\n")
        if comment:
            fh.write(f"% {comment}\n")
        fh.write(f"{a.n_rows} {a.n_cols} {len(vals)}\n")
        for k in order:
            fh.write(f"{rows[k] + 1} {cols[k] + 1} {vals[k]:.17g}\n")
