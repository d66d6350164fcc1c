"""Compressed-row sparse layer and global operator assembly.

Only the operations this artifact needs: deterministic assembly from
local contributions, matrix-vector products, sparse triple products for
the system matrices, submatrix extraction for boundary conditions, and
a coordinate-format text export.  Heavy inner loops dispatch to the
active kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernels

__all__ = ["SparseMatrix", "assemble", "matvec", "matmat", "triple_product",
           "dense_assemble"]


@dataclass(frozen=True)
class SparseMatrix:
    """CSR matrix: sorted, duplicate-free column indices per row."""

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @staticmethod
    def from_coo(rows, cols, vals, shape) -> "SparseMatrix":
        indptr, indices, data = _kernels.coo_to_csr(
            shape[0], shape[1], rows, cols, vals)
        return SparseMatrix(tuple(shape), indptr, indices, data)

    @staticmethod
    def identity(n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return SparseMatrix((n, n), np.arange(n + 1), idx, np.ones(n))

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    def to_coo(self):
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        return rows, self.indices.copy(), self.data.copy()

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows, cols, vals = self.to_coo()
        out[rows, cols] = vals
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise ValueError(
                f"matvec shape mismatch: {self.shape} @ {x.shape}")
        return _kernels.csr_matvec(self.indptr, self.indices, self.data, x)

    def transpose(self) -> "SparseMatrix":
        rows, cols, vals = self.to_coo()
        return SparseMatrix.from_coo(
            cols, rows, vals, (self.shape[1], self.shape[0]))

    def diagonal(self) -> np.ndarray:
        rows, cols, vals = self.to_coo()
        out = np.zeros(min(self.shape))
        on = rows == cols
        out[rows[on]] = vals[on]
        return out

    def submatrix(self, row_ids: np.ndarray, col_ids: np.ndarray) -> "SparseMatrix":
        """Extract rows/cols (given as ascending global index arrays)."""
        rows, cols, vals = self.to_coo()
        rpos = np.searchsorted(row_ids, rows)
        rok = (rpos < row_ids.size)
        rok[rok] &= row_ids[rpos[rok]] == rows[rok]
        cpos = np.searchsorted(col_ids, cols)
        cok = (cpos < col_ids.size)
        cok[cok] &= col_ids[cpos[cok]] == cols[cok]
        keep = rok & cok
        return SparseMatrix.from_coo(
            rpos[keep], cpos[keep], vals[keep],
            (row_ids.size, col_ids.size))

    def export_coo_text(self, fh) -> None:
        """Write 1-based 'i j value' lines (stable order)."""
        rows, cols, vals = self.to_coo()
        fh.write(f"% {self.shape[0]} {self.shape[1]} {self.nnz}\n")
        for r, c, v in zip(rows + 1, cols + 1, vals):
            fh.write(f"{r} {c} {v:.17g}\n")


def assemble(contributions: Iterable[tuple[np.ndarray, np.ndarray]],
             shape: tuple[int, int]) -> SparseMatrix:
    """Sum local dense blocks into a global sparse matrix.

    Each contribution is ``(index_map, local_matrix)``; entry (i, j) of
    the local matrix lands at global ``(index_map[i], index_map[j])``.
    The merge is ordering-independent: triplets are stably sorted by
    global position before summation.
    """
    rows, cols, vals = [], [], []
    for index_map, local in contributions:
        index_map = np.asarray(index_map, dtype=np.int64)
        local = np.asarray(local, dtype=np.float64)
        m = index_map.size
        if local.shape != (m, m):
            raise ValueError("local matrix does not match its index map")
        rows.append(np.repeat(index_map, m))
        cols.append(np.tile(index_map, m))
        vals.append(local.ravel())
    if not rows:
        return SparseMatrix.from_coo(
            np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0), shape)
    return SparseMatrix.from_coo(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        shape)


def dense_assemble(contributions: Iterable[tuple[np.ndarray, np.ndarray]],
                   shape: tuple[int, int]) -> np.ndarray:
    """Brute-force dense twin of :func:`assemble` (oracle for tests)."""
    out = np.zeros(shape)
    for index_map, local in contributions:
        index_map = np.asarray(index_map, dtype=np.int64)
        out[np.ix_(index_map, index_map)] += np.asarray(local)
    return out


def matvec(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    return a.matvec(x)


def matmat(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmat shape mismatch: {a.shape} @ {b.shape}")
    indptr, indices, data = _kernels.csr_matmat(
        a.shape[0], a.indptr, a.indices, a.data,
        b.shape[1], b.indptr, b.indices, b.data)
    return SparseMatrix((a.shape[0], b.shape[1]), indptr, indices, data)


def triple_product(a: SparseMatrix, m: SparseMatrix,
                   b: SparseMatrix) -> SparseMatrix:
    """A @ M @ B, e.g. the system matrices D M D^T and G^T M G."""
    return matmat(matmat(a, m), b)


def incidence_csr(rows, cols, vals, shape) -> SparseMatrix:
    """Convenience wrapper for the COO triplets of incidence operators."""
    return SparseMatrix.from_coo(rows, cols, vals, shape)
