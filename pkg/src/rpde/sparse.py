"""CSR storage for symmetric positive definite systems and a preconditioned CG solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, NumericError


@dataclass(frozen=True, eq=False)
class SparseSpd:
    """Square matrix in canonical CSR form (sorted columns, no duplicates).

    Both triangles are stored.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        idx = np.int32 if self.nnz < np.iinfo(np.int32).max else np.int64
        return sp.csr_matrix(
            (self.values, self.col_idx.astype(idx, copy=False), self.row_ptr.astype(idx, copy=False)),
            shape=(self.n, self.n),
        )

    @cached_property
    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._csr @ x

    __matmul__ = matvec

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    @property
    def nnz(self) -> int:
        return len(self.values)

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        diff = self._csr - self._csr.T
        scale = np.abs(self.values).max(initial=0.0)
        return diff.nnz == 0 or np.abs(diff.data).max() <= rtol * scale


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Canonical CSR structure plus the slot each input triplet accumulates into.

    Lets repeated assemblies with the same (row, col) triplets skip sorting:
    ``values = np.bincount(slot, weights=triplet_values, minlength=nnz)``.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    slot: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.col_idx)

    def accumulate(self, triplet_values: np.ndarray) -> np.ndarray:
        return np.bincount(self.slot, weights=triplet_values, minlength=self.nnz)

    def matrix(self, triplet_values: np.ndarray) -> SparseSpd:
        return SparseSpd(self.n, self.row_ptr, self.col_idx, self.accumulate(triplet_values))


def sparsity_pattern(rows: np.ndarray, cols: np.ndarray, n: int) -> SparsityPattern:
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    keys = rows * n + cols
    unique, slot = np.unique(keys, return_inverse=True)
    idx = np.int32 if unique.size < np.iinfo(np.int32).max else np.int64
    col_idx = (unique % n).astype(idx) if n else unique.astype(idx)
    row_ptr = np.zeros(n + 1, dtype=idx)
    if n:
        np.cumsum(np.bincount(unique // n, minlength=n), out=row_ptr[1:])
    return SparsityPattern(n=n, row_ptr=row_ptr, col_idx=col_idx, slot=slot.ravel())


@dataclass
class CooBuilder:
    """Triplet accumulator; duplicates are summed on :meth:`finalize`."""

    n: int
    _rows: list = field(default_factory=list)
    _cols: list = field(default_factory=list)
    _vals: list = field(default_factory=list)

    def add(self, row, col, value) -> None:
        self._rows.append(np.atleast_1d(np.asarray(row, dtype=np.int64)).ravel())
        self._cols.append(np.atleast_1d(np.asarray(col, dtype=np.int64)).ravel())
        self._vals.append(np.atleast_1d(np.asarray(value, dtype=float)).ravel())

    def finalize(self) -> SparseSpd:
        if self._rows:
            rows, cols, vals = (np.concatenate(x) for x in (self._rows, self._cols, self._vals))
        else:
            rows = cols = np.empty(0, dtype=np.int64)
            vals = np.empty(0)
        if rows.size and (rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= self.n):
            raise IndexError("triplet index outside matrix dimension")
        return sparsity_pattern(rows, cols, self.n).matrix(vals)


def cg_solve(A, b, tol=1e-10, max_iter=None, x0=None, callback=None) -> np.ndarray:
    """Solve ``A x = b`` by conjugate gradients with Jacobi preconditioning.

    Stops when ``||A x - b||_2 <= tol * ||b||_2``. The recursively updated
    residual is confirmed against a freshly computed one before returning.
    ``callback(k, x)`` is invoked after every iteration.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    if max_iter is None:
        max_iter = max(20 * n, 1)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not np.all(np.isfinite(b)):
        raise NumericError("right-hand side contains NaN or Inf")

    matvec = A.matvec if hasattr(A, "matvec") else (lambda v: A @ v)
    diag = A.diagonal if isinstance(A, SparseSpd) else np.asarray(np.diag(A))
    if n and np.any(diag <= 0):
        raise NumericError("matrix has a nonpositive diagonal entry")

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    b_norm = np.linalg.norm(b)
    if n == 0 or b_norm == 0.0:
        return np.zeros(n)
    target = tol * b_norm
    inv_diag = 1.0 / diag

    r = b - matvec(x)
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    res = np.sqrt(r @ r)
    k = 0
    while k < max_iter:
        if res <= target:
            res = np.linalg.norm(b - matvec(x))
            if res <= target:
                return x
            r = b - matvec(x)
            z = inv_diag * r
            p = z.copy()
            rz = r @ z
        Ap = matvec(p)
        pAp = p @ Ap
        if not np.isfinite(pAp):
            raise NumericError(f"non-finite value in CG at iteration {k}")
        if pAp <= 0.0:
            raise NumericError(f"matrix is not positive definite (p'Ap = {pAp:g})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = inv_diag * r
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
        res = np.sqrt(r @ r)
        k += 1
        if callback is not None:
            callback(k, x)
    res = np.linalg.norm(b - matvec(x))
    if res <= target:
        return x
    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations (relative residual {res / b_norm:.3e})",
        residual=res / b_norm,
        iterations=k,
    )
