# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the numeric kernels.

Operation-for-operation twin of ``pyk``; see that module for the
contract of each function.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from libc.string cimport memset

cnp.import_array()

__all__ = ["coo_to_csr", "csr_matvec", "csr_matmat", "dual_cell_blocks"]


def coo_to_csr(Py_ssize_t n_rows, Py_ssize_t n_cols, rows, cols, vals):
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows
                      or cols.min() < 0 or cols.max() >= n_cols):
        raise IndexError("COO index out of bounds")
    order = np.lexsort((cols, rows))
    cdef cnp.int64_t[::1] r = np.ascontiguousarray(rows[order])
    cdef cnp.int64_t[::1] c = np.ascontiguousarray(cols[order])
    cdef double[::1] v = np.ascontiguousarray(vals[order])
    cdef Py_ssize_t n = r.shape[0]

    out_r = np.empty(n, dtype=np.int64)
    out_c = np.empty(n, dtype=np.int64)
    out_v = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] orr = out_r
    cdef cnp.int64_t[::1] occ = out_c
    cdef double[::1] ovv = out_v

    cdef Py_ssize_t i, m = 0
    cdef double acc
    cdef cnp.int64_t cr, cc
    i = 0
    while i < n:
        cr = r[i]
        cc = c[i]
        acc = v[i]
        i += 1
        while i < n and r[i] == cr and c[i] == cc:
            acc += v[i]
            i += 1
        if acc != 0.0:
            orr[m] = cr
            occ[m] = cc
            ovv[m] = acc
            m += 1

    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] ip = indptr
    for i in range(m):
        ip[orr[i] + 1] += 1
    for i in range(n_rows):
        ip[i + 1] += ip[i]
    return indptr, out_c[:m].copy(), out_v[:m].copy()


def csr_matvec(indptr, indices, data, x):
    cdef cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef double[::1] dv = np.ascontiguousarray(data, dtype=np.float64)
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = ip.shape[0] - 1
    y = np.zeros(n)
    cdef double[::1] yv = y
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(ip[i], ip[i + 1]):
            acc += dv[k] * xv[ix[k]]
        yv[i] = acc
    return y


def csr_matmat(Py_ssize_t n_rows, indptr_a, indices_a, data_a,
               Py_ssize_t n_cols, indptr_b, indices_b, data_b):
    """Gustavson row-merge product; output columns sorted per row."""
    cdef cnp.int64_t[::1] ipa = np.ascontiguousarray(indptr_a, dtype=np.int64)
    cdef cnp.int64_t[::1] ixa = np.ascontiguousarray(indices_a, dtype=np.int64)
    cdef double[::1] da = np.ascontiguousarray(data_a, dtype=np.float64)
    cdef cnp.int64_t[::1] ipb = np.ascontiguousarray(indptr_b, dtype=np.int64)
    cdef cnp.int64_t[::1] ixb = np.ascontiguousarray(indices_b, dtype=np.int64)
    cdef double[::1] db = np.ascontiguousarray(data_b, dtype=np.float64)

    cdef cnp.int64_t[::1] mark = np.full(n_cols, -1, dtype=np.int64)
    cdef Py_ssize_t i, jj, kk, j, col, count

    # symbolic pass: nnz per row
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] ip = indptr
    for i in range(n_rows):
        count = 0
        for jj in range(ipa[i], ipa[i + 1]):
            j = ixa[jj]
            for kk in range(ipb[j], ipb[j + 1]):
                col = ixb[kk]
                if mark[col] != i:
                    mark[col] = i
                    count += 1
        ip[i + 1] = count
    for i in range(n_rows):
        ip[i + 1] += ip[i]

    cdef Py_ssize_t nnz = ip[n_rows]
    indices = np.empty(nnz, dtype=np.int64)
    data = np.zeros(nnz, dtype=np.float64)
    cdef cnp.int64_t[::1] ix = indices
    cdef double[::1] dv = data
    cdef cnp.int64_t[::1] where = np.full(n_cols, -1, dtype=np.int64)
    mark[:] = -1

    cdef Py_ssize_t head
    cdef double av
    for i in range(n_rows):
        head = ip[i]
        for jj in range(ipa[i], ipa[i + 1]):
            j = ixa[jj]
            av = da[jj]
            for kk in range(ipb[j], ipb[j + 1]):
                col = ixb[kk]
                if mark[col] != i:
                    mark[col] = i
                    ix[head] = col
                    where[col] = head
                    dv[head] = av * db[kk]
                    head += 1
                else:
                    dv[where[col]] += av * db[kk]
        _sort_row(ix, dv, ip[i], head)

    return indptr, indices, data


cdef void _sort_row(cnp.int64_t[::1] ix, double[::1] dv,
                    Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    """Insertion sort of a short CSR row by column index."""
    cdef Py_ssize_t i, j
    cdef cnp.int64_t c
    cdef double v
    for i in range(lo + 1, hi):
        c = ix[i]
        v = dv[i]
        j = i
        while j > lo and ix[j - 1] > c:
            ix[j] = ix[j - 1]
            dv[j] = dv[j - 1]
            j -= 1
        ix[j] = c
        dv[j] = v


cdef int _cholesky(double* a, Py_ssize_t n) noexcept nogil:
    """In-place lower Cholesky of a row-major n x n matrix."""
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(n):
        s = a[j * n + j]
        for k in range(j):
            s -= a[j * n + k] * a[j * n + k]
        if s <= 0.0:
            return -1
        a[j * n + j] = sqrt(s)
        for i in range(j + 1, n):
            s = a[i * n + j]
            for k in range(j):
                s -= a[i * n + k] * a[j * n + k]
            a[i * n + j] = s / a[j * n + j]
    return 0


cdef void _cho_solve(double* l, double* b, Py_ssize_t n) noexcept nogil:
    """Solve (L L^T) x = b in place given the lower factor."""
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= l[i * n + k] * b[k]
        b[i] = s / l[i * n + i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= l[k * n + i] * b[k]
        b[i] = s / l[i * n + i]


def dual_cell_blocks(f_ptr, f_rows, x_rows, f_active, f_es, kd, dvol, mode,
                     c_ptr, dloc_col, dloc_sign, a_ptr, want_local, s_ptr):
    cdef cnp.int64_t[::1] fp = np.ascontiguousarray(f_ptr, dtype=np.int64)
    cdef double[:, ::1] fr = np.ascontiguousarray(f_rows, dtype=np.float64)
    cdef double[:, ::1] xr = np.ascontiguousarray(x_rows, dtype=np.float64)
    cdef cnp.uint8_t[::1] fa = np.ascontiguousarray(f_active, dtype=np.uint8)
    cdef double[::1] fe = np.ascontiguousarray(f_es, dtype=np.float64)
    cdef double[:, :, ::1] kdv = np.ascontiguousarray(kd, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(dvol, dtype=np.float64)
    cdef cnp.uint8_t[::1] md = np.ascontiguousarray(mode, dtype=np.uint8)
    cdef cnp.int64_t[::1] cp = np.ascontiguousarray(c_ptr, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] dc = np.ascontiguousarray(dloc_col, dtype=np.int64)
    cdef cnp.int8_t[:, ::1] ds = np.ascontiguousarray(dloc_sign, dtype=np.int8)
    cdef cnp.int64_t[::1] ap = np.ascontiguousarray(a_ptr, dtype=np.int64)
    cdef cnp.int64_t[::1] sp = np.ascontiguousarray(s_ptr, dtype=np.int64)
    cdef bint wl = bool(want_local)

    cdef Py_ssize_t n_nodes = fp.shape[0] - 1
    out_a_arr = np.zeros(int(ap[n_nodes]))
    out_rhs_arr = np.zeros(int(cp[n_nodes]))
    out_s_arr = np.zeros(int(sp[n_nodes]) if wl else 0)
    cdef double[::1] out_a = out_a_arr
    cdef double[::1] out_rhs = out_rhs_arr
    cdef double[::1] out_s = out_s_arr

    # workspaces sized by the largest dual cell
    cdef Py_ssize_t mmax = 0, i
    for i in range(n_nodes):
        if fp[i + 1] - fp[i] > mmax:
            mmax = fp[i + 1] - fp[i]
    buf_mat = np.zeros(mmax * mmax)
    buf_s = np.zeros(mmax * mmax)
    buf_ii = np.zeros(mmax * mmax)
    buf_ai = np.zeros(mmax * mmax)
    buf_t = np.zeros(mmax * 3)
    buf_y = np.zeros(mmax)
    buf_col = np.zeros(mmax)
    idx_act = np.zeros(mmax, dtype=np.int64)
    idx_ins = np.zeros(mmax, dtype=np.int64)
    cdef double[::1] mat = buf_mat
    cdef double[::1] smat = buf_s
    cdef double[::1] mii = buf_ii
    cdef double[::1] mai = buf_ai
    cdef double[::1] tbuf = buf_t
    cdef double[::1] ybuf = buf_y
    cdef double[::1] colbuf = buf_col
    cdef cnp.int64_t[::1] act = idx_act
    cdef cnp.int64_t[::1] ins = idx_ins

    cdef Py_ssize_t n, f0, m, na, ni, r, c, k, l, c0, mc, ci, cj, o, col
    cdef double vol, alpha, det, acc, sgn
    cdef double xtx[9]
    cdef double xinv[9]
    cdef double sol0, sol1, sol2

    for n in range(n_nodes):
        if md[n]:
            continue
        f0 = fp[n]
        m = fp[n + 1] - f0
        vol = dv[n]

        # consistent term: (F Kd) F^T / vol
        for r in range(m):
            for k in range(3):
                acc = 0.0
                for l in range(3):
                    acc += fr[f0 + r, l] * kdv[n, l, k]
                tbuf[r * 3 + k] = acc
        alpha = 0.0
        for r in range(m):
            for c in range(r, m):
                acc = 0.0
                for k in range(3):
                    acc += tbuf[r * 3 + k] * fr[f0 + c, k]
                acc /= vol
                mat[r * m + c] = acc
                mat[c * m + r] = acc
            alpha += mat[r * m + r]
        alpha /= m

        # stabilization: alpha (I - X (X^T X)^{-1} X^T)
        for k in range(9):
            xtx[k] = 0.0
        for r in range(m):
            for k in range(3):
                for l in range(3):
                    xtx[k * 3 + l] += xr[f0 + r, k] * xr[f0 + r, l]
        det = (xtx[0] * (xtx[4] * xtx[8] - xtx[5] * xtx[7])
               - xtx[1] * (xtx[3] * xtx[8] - xtx[5] * xtx[6])
               + xtx[2] * (xtx[3] * xtx[7] - xtx[4] * xtx[6]))
        if det == 0.0:
            raise ValueError("degenerate dual cell: DoF rows have rank < 3")
        xinv[0] = (xtx[4] * xtx[8] - xtx[5] * xtx[7]) / det
        xinv[1] = (xtx[2] * xtx[7] - xtx[1] * xtx[8]) / det
        xinv[2] = (xtx[1] * xtx[5] - xtx[2] * xtx[4]) / det
        xinv[3] = (xtx[5] * xtx[6] - xtx[3] * xtx[8]) / det
        xinv[4] = (xtx[0] * xtx[8] - xtx[2] * xtx[6]) / det
        xinv[5] = (xtx[2] * xtx[3] - xtx[0] * xtx[5]) / det
        xinv[6] = (xtx[3] * xtx[7] - xtx[4] * xtx[6]) / det
        xinv[7] = (xtx[1] * xtx[6] - xtx[0] * xtx[7]) / det
        xinv[8] = (xtx[0] * xtx[4] - xtx[1] * xtx[3]) / det
        # tbuf <- X @ xinv (m x 3)
        for r in range(m):
            for k in range(3):
                acc = 0.0
                for l in range(3):
                    acc += xr[f0 + r, l] * xinv[l * 3 + k]
                tbuf[r * 3 + k] = acc
        for r in range(m):
            for c in range(r, m):
                acc = 0.0
                for k in range(3):
                    acc += tbuf[r * 3 + k] * xr[f0 + c, k]
                acc = -alpha * acc
                if r == c:
                    acc += alpha
                mat[r * m + c] += acc
                if c > r:
                    mat[c * m + r] += acc

        # partition active / insulated
        na = 0
        ni = 0
        for r in range(m):
            if fa[f0 + r]:
                act[na] = r
                na += 1
            else:
                ins[ni] = r
                ni += 1

        if ni == 0:
            for r in range(m):
                for c in range(m):
                    smat[r * m + c] = mat[r * m + c]
        else:
            # S = M_AA - M_AI M_II^{-1} M_IA
            for r in range(ni):
                for c in range(ni):
                    mii[r * ni + c] = mat[ins[r] * m + ins[c]]
            if _cholesky(&mii[0], ni) != 0:
                raise ValueError("insulated block not SPD")
            for r in range(na):
                for c in range(ni):
                    mai[r * ni + c] = mat[act[r] * m + ins[c]]
            for r in range(na):
                for c in range(ni):
                    colbuf[c] = mai[r * ni + c]
                _cho_solve(&mii[0], &colbuf[0], ni)
                for c in range(na):
                    acc = 0.0
                    for k in range(ni):
                        acc += mai[c * ni + k] * colbuf[k]
                    if c >= r:
                        smat[r * na + c] = mat[act[r] * m + act[c]] - acc
            for r in range(na):
                for c in range(r):
                    smat[r * na + c] = smat[c * na + r]

        if wl:
            o = sp[n]
            for k in range(na * na):
                out_s[o + k] = smat[k]

        # y = S @ es_active
        for r in range(na):
            acc = 0.0
            for c in range(na):
                acc += smat[r * na + c] * fe[f0 + act[c]]
            ybuf[r] = acc

        # cell-space block Dloc S Dloc^T and rhs Dloc y
        c0 = cp[n]
        mc = cp[n + 1] - c0
        o = ap[n]
        for ci in range(mc):
            for r in range(na):
                colbuf[r] = 0.0
            acc = 0.0
            for k in range(3):
                col = dc[c0 + ci, k]
                if col >= 0:
                    sgn = ds[c0 + ci, k]
                    acc += sgn * ybuf[col]
                    for r in range(na):
                        colbuf[r] += sgn * smat[col * na + r]
            out_rhs[c0 + ci] = acc
            for cj in range(mc):
                acc = 0.0
                for k in range(3):
                    col = dc[c0 + cj, k]
                    if col >= 0:
                        acc += ds[c0 + cj, k] * colbuf[col]
                out_a[o + ci * mc + cj] = acc

    return out_a_arr, out_rhs_arr, out_s_arr
