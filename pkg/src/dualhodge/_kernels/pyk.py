"""Pure-numpy implementation of the numeric kernels.

Mirrors the compiled extension ``_cyk`` operation for operation; both
must stay drop-in interchangeable (the test suite asserts parity).
"""

from __future__ import annotations

import numpy as np

__all__ = ["coo_to_csr", "csr_matvec", "csr_matmat", "dual_cell_blocks"]


def coo_to_csr(n_rows: int, n_cols: int, rows: np.ndarray, cols: np.ndarray,
               vals: np.ndarray):
    """Sort COO triplets by (row, col), sum duplicates, return CSR.

    Duplicates are summed in input order (stable sort + left-to-right
    reduction), so the result is bitwise reproducible.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows
                      or cols.min() < 0 or cols.max() >= n_cols):
        raise IndexError("COO index out of bounds")

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        new = np.empty(rows.size, dtype=bool)
        new[0] = True
        new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]

    keep = vals != 0.0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols, vals


def csr_matvec(indptr: np.ndarray, indices: np.ndarray, data: np.ndarray,
               x: np.ndarray) -> np.ndarray:
    """y = A @ x for a CSR matrix."""
    prod = data * x[indices]
    n = indptr.size - 1
    y = np.zeros(n)
    starts = indptr[:-1]
    nonempty = indptr[1:] > starts
    if prod.size:
        y[nonempty] = np.add.reduceat(prod, starts[nonempty])
    return y


def csr_matmat(n_rows: int, indptr_a, indices_a, data_a,
               n_cols: int, indptr_b, indices_b, data_b):
    """C = A @ B for CSR inputs, returned as CSR.

    Vectorized row expansion: every stored entry (i, k, a) of A is joined
    with row k of B, and the flat COO product list is merged.
    """
    rows_a = np.repeat(np.arange(n_rows), np.diff(indptr_a))
    lens = indptr_b[indices_a + 1] - indptr_b[indices_a]
    total = int(lens.sum())
    out_rows = np.repeat(rows_a, lens)
    offsets = np.repeat(np.cumsum(lens) - lens, lens)
    flat = (np.arange(total) - offsets
            + np.repeat(indptr_b[indices_a], lens))
    out_cols = indices_b[flat]
    out_vals = np.repeat(data_a, lens) * data_b[flat]
    return coo_to_csr(n_rows, n_cols, out_rows, out_cols, out_vals)


def _condense(mat: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Schur complement onto the active index subset of an SPD matrix."""
    if active.all():
        return mat
    ins = ~active
    m_aa = mat[np.ix_(active, active)]
    m_ai = mat[np.ix_(active, ins)]
    m_ii = mat[np.ix_(ins, ins)]
    return m_aa - m_ai @ np.linalg.solve(m_ii, m_ai.T)


def dual_cell_blocks(
    f_ptr: np.ndarray,       # (N+1,) faces-per-node offsets
    f_rows: np.ndarray,      # (Tf, 3) restricted primal face rows (f/3)
    x_rows: np.ndarray,      # (Tf, 3) dual edge + stub rows
    f_active: np.ndarray,    # (Tf,) uint8, 0 = condensed away
    f_es: np.ndarray,        # (Tf,) source voltage entries
    kd: np.ndarray,          # (N, 3, 3) dual material tensor per node
    dvol: np.ndarray,        # (N,) dual cell volumes
    mode: np.ndarray,        # (N,) uint8, 1 = skip (externally built)
    c_ptr: np.ndarray,       # (N+1,) cells-per-node offsets
    dloc_col: np.ndarray,    # (Tc, 3) local *active* face index or -1
    dloc_sign: np.ndarray,   # (Tc, 3) int8 D signs
    a_ptr: np.ndarray,       # (N+1,) output offsets, diff = (cells/node)^2
    want_local: bool,
    s_ptr: np.ndarray,       # (N+1,) offsets, diff = (active faces/node)^2
):
    """Per-dual-cell local operators and their cell-space projections.

    For every node (unless ``mode`` flags it as externally handled) this
    builds the local inverse edge-mass matrix

        M = F Kd F^T / |dc|  +  alpha (I - P_X),   alpha = tr(cons)/m,

    with ``P_X`` the orthogonal projector onto the column span of the
    dual-edge rows ``X``; condenses the rows/columns of inactive
    (insulated) faces by a Schur complement, which is how the zero
    normal-current boundary condition enters; and emits

    * ``out_a``: the cell-space block  Dloc @ S @ Dloc^T  (flattened),
    * ``out_rhs``: per (node, cell) entries of  Dloc @ S @ es,
    * ``out_s``: the condensed S itself when ``want_local`` is set.
    """
    n_nodes = f_ptr.size - 1
    out_a = np.zeros(int(a_ptr[-1]))
    out_rhs = np.zeros(int(c_ptr[-1]))
    out_s = np.zeros(int(s_ptr[-1]) if want_local else 0)

    for n in range(n_nodes):
        if mode[n]:
            continue
        f0, f1 = f_ptr[n], f_ptr[n + 1]
        fr = f_rows[f0:f1]
        xr = x_rows[f0:f1]
        m = f1 - f0

        cons = fr @ kd[n] @ fr.T / dvol[n]
        alpha = np.trace(cons) / m
        sol = np.linalg.solve(xr.T @ xr, xr.T)
        mat = cons + alpha * (np.eye(m) - xr @ sol)

        active = f_active[f0:f1].astype(bool)
        s = _condense(mat, active)
        if want_local:
            o = s_ptr[n]
            out_s[o:o + s.size] = s.ravel()

        es = f_es[f0:f1][active]
        y = s @ es

        c0, c1 = c_ptr[n], c_ptr[n + 1]
        mc = c1 - c0
        cols = dloc_col[c0:c1]
        sgns = dloc_sign[c0:c1].astype(np.float64)
        block = np.zeros((mc, mc))
        rhs = np.zeros(mc)
        for ci in range(mc):
            acc = np.zeros(s.shape[0])
            r = 0.0
            for k in range(3):
                col = cols[ci, k]
                if col >= 0:
                    acc += sgns[ci, k] * s[col]
                    r += sgns[ci, k] * y[col]
            rhs[ci] = r
            for cj in range(mc):
                v = 0.0
                for k in range(3):
                    col = cols[cj, k]
                    if col >= 0:
                        v += sgns[cj, k] * acc[col]
                block[ci, cj] = v
        o = a_ptr[n]
        out_a[o:o + mc * mc] = block.ravel()
        out_rhs[c0:c1] = rhs

    return out_a, out_rhs, out_s
