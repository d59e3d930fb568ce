"""Sparse matrices and direct solvers.

Dense Cholesky (LAPACK ``potrf``/``potrs``) is the reference path; a SuperLU
factorization with symmetric ordering and no partial pivoting is the sparse
fast path. Both report the first non-positive pivot on indefinite input.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.linalg import lapack
from scipy.sparse import linalg as spla

from .errors import NotSPDError, NumericalError, ValidationError

DENSE_LIMIT = 1000


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Canonical COO storage: entries sorted row-major, duplicates summed."""

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @classmethod
    def from_arrays(cls, rows: int, cols: int, i, j, v) -> "SparseMatrix":
        i = np.asarray(i, dtype=np.int64).reshape(-1)
        j = np.asarray(j, dtype=np.int64).reshape(-1)
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        if not (i.size == j.size == v.size):
            raise ValidationError("triplet arrays must have equal length")
        if i.size and (i.min() < 0 or i.max() >= rows or j.min() < 0 or j.max() >= cols):
            raise ValidationError(f"triplet index out of range for a {rows}x{cols} matrix")
        if not np.all(np.isfinite(v)):
            raise ValidationError("triplet values must be finite")
        coo = sparse.coo_matrix((v, (i, j)), shape=(rows, cols))
        coo.sum_duplicates()  # also sorts row-major
        return cls(rows, cols, coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy())

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        coo = sparse.coo_matrix(mat)
        return cls.from_arrays(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_csr(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.values, (self.row_idx, self.col_idx)), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.row_idx, self.col_idx), self.values)
        return out

    def __matmul__(self, x):
        return self.to_csr() @ np.asarray(x, dtype=float)

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_arrays(self.cols, self.rows, self.col_idx, self.row_idx, self.values)

    T = property(transpose)

    def diagonal(self) -> np.ndarray:
        return self.to_csr().diagonal()


def sparse_from_triplets(rows: int, cols: int, triplets: Iterable[tuple[int, int, float]]) -> SparseMatrix:
    """Build a :class:`SparseMatrix` from ``(row, col, value)`` tuples; duplicates add."""
    t = list(triplets)
    if not t:
        return SparseMatrix.from_arrays(rows, cols, [], [], [])
    arr = np.array(t, dtype=object)
    return SparseMatrix.from_arrays(rows, cols, arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64),
                                    arr[:, 2].astype(np.float64))


def _as_matrix(A):
    if isinstance(A, SparseMatrix):
        return A
    if sparse.issparse(A):
        return SparseMatrix.from_scipy(A)
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError(f"expected a matrix, got shape {A.shape}")
    return A


def _check_symmetric(A, tol: float = 1e-10) -> None:
    if isinstance(A, SparseMatrix):
        csr = A.to_csr()
        diff = abs(csr - csr.T).max() if csr.nnz else 0.0
        scale = abs(csr).max() if csr.nnz else 0.0
    else:
        diff = np.abs(A - A.T).max() if A.size else 0.0
        scale = np.abs(A).max() if A.size else 0.0
    if diff > tol * max(scale, 1e-300):
        raise ValidationError(f"matrix is not symmetric (max asymmetry {diff:.3e}, scale {scale:.3e})")


class Factorization:
    """Reusable factorization; ``solve`` accepts a vector or an (n, k) block."""

    kind: str
    n: int

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise ValidationError(f"right-hand side has {b.shape[0]} rows, system has {self.n}")
        if not np.all(np.isfinite(b)):
            raise NumericalError("right-hand side contains non-finite values")
        x = self._solve(b)
        if not np.all(np.isfinite(x)):
            raise NumericalError("solve produced non-finite values")
        return x

    def _solve(self, b):  # pragma: no cover - abstract
        raise NotImplementedError


class DenseCholesky(Factorization):
    kind = "dense-cholesky"

    def __init__(self, A: np.ndarray):
        self.n = A.shape[0]
        c, info = lapack.dpotrf(A, lower=True, clean=True, overwrite_a=False)
        if info > 0:
            raise NotSPDError(int(info) - 1)
        if info < 0:  # pragma: no cover
            raise NumericalError(f"dpotrf argument error {info}")
        self.factor = c

    def _solve(self, b):
        x, info = lapack.dpotrs(self.factor, b, lower=True)
        if info != 0:  # pragma: no cover
            raise NumericalError(f"dpotrs failed with info={info}")
        return x

    def inverse(self) -> np.ndarray:
        inv, info = lapack.dpotri(self.factor, lower=True)
        if info != 0:  # pragma: no cover
            raise NumericalError(f"dpotri failed with info={info}")
        return np.tril(inv) + np.tril(inv, -1).T


class SparseSPD(Factorization):
    """LU with symmetric fill-reducing ordering and diagonal pivots only.

    Without partial pivoting the diagonal of U equals the pivots of an LDL^T
    factorization of the permuted matrix, so a non-positive entry flags an
    indefinite matrix.
    """

    kind = "sparse-ldl"

    def __init__(self, A: SparseMatrix):
        self.n = A.rows
        csc = A.to_csr().tocsc()
        try:
            lu = spla.splu(csc, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:  # exactly singular
            raise NotSPDError(0) from exc
        d = lu.U.diagonal()
        bad = np.where(~(d > 0))[0]
        if bad.size:
            raise NotSPDError(int(lu.perm_c[bad[0]]))
        self._lu = lu

    def _solve(self, b):
        return self._lu.solve(b)


def factor_spd(A, method: str = "auto", check_symmetry: bool = True) -> Factorization:
    """Cholesky-type factorization of a symmetric positive definite matrix.

    ``method`` is ``"dense"``, ``"sparse"``, or ``"auto"`` (dense up to
    ``DENSE_LIMIT`` rows). ``check_symmetry=False`` skips the symmetry test
    for callers that assemble symmetric matrices by construction.
    """
    A = _as_matrix(A)
    rows, cols = A.shape
    if rows != cols:
        raise ValidationError(f"matrix must be square, got {A.shape}")
    if check_symmetry:
        _check_symmetric(A)
    if method == "auto":
        method = "dense" if rows <= DENSE_LIMIT else "sparse"
    if method == "dense":
        dense = A.to_dense() if isinstance(A, SparseMatrix) else A
        return DenseCholesky(dense)
    if method == "sparse":
        sp = A if isinstance(A, SparseMatrix) else SparseMatrix.from_scipy(sparse.csr_matrix(A))
        return SparseSPD(sp)
    raise ValidationError(f"unknown factorization method {method!r}")


class DenseLU(Factorization):
    kind = "dense-lu"

    def __init__(self, A: np.ndarray):
        self.n = A.shape[0]
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is reported below
            lu, piv = sla.lu_factor(A, check_finite=True)
        diag = np.abs(np.diag(lu))
        if diag.size and (diag.min() == 0 or diag.min() <= 1e-14 * diag.max()):
            raise NumericalError("matrix is singular to working precision")
        self._lu = (lu, piv)

    def _solve(self, b):
        return sla.lu_solve(self._lu, b)

    def solve_transpose(self, b) -> np.ndarray:
        return sla.lu_solve(self._lu, np.asarray(b, dtype=float), trans=1)


def factor_lu(A) -> DenseLU:
    A = _as_matrix(A)
    dense = A.to_dense() if isinstance(A, SparseMatrix) else A
    if dense.shape[0] != dense.shape[1]:
        raise ValidationError(f"matrix must be square, got {dense.shape}")
    return DenseLU(dense)


def solve(fact: Factorization, b) -> np.ndarray:
    return fact.solve(b)
