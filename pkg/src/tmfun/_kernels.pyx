# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: CSR x dense products, top-N row selection, row scatter-add."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

ctypedef fused floating:
    float
    double


def spmm(const cnp.int64_t[::1] row_offsets, const cnp.int64_t[::1] col_indices,
         const float[::1] weights, const floating[:, ::1] x):
    """Return ``A @ x`` for CSR ``A``; each output row is accumulated in double, left to right."""
    cdef Py_ssize_t n_rows = row_offsets.shape[0] - 1
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, jj, k, j
    cdef double w
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((n_rows, d), dtype=dtype)
    cdef floating[:, ::1] o = out
    cdef double *acc = <double *> malloc(max(d, 1) * sizeof(double))
    if acc == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n_rows):
                for k in range(d):
                    acc[k] = 0.0
                for jj in range(row_offsets[i], row_offsets[i + 1]):
                    j = col_indices[jj]
                    w = weights[jj]
                    for k in range(d):
                        acc[k] += w * x[j, k]
                for k in range(d):
                    o[i, k] = <floating> acc[k]
    finally:
        free(acc)
    return out


def topn_select(const double[:, ::1] sims, const cnp.int64_t[::1] self_index, Py_ssize_t top_n):
    """Per row, indices of the ``top_n`` largest entries excluding ``self_index[row]``.

    Ordered by descending value; equal values keep the lower column first.
    """
    cdef Py_ssize_t n_rows = sims.shape[0], n = sims.shape[1]
    cdef Py_ssize_t r, j, pos, filled, t, limit
    cdef double s
    t = min(top_n, n - 1) if n > 0 else 0
    out = np.full((n_rows, t), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = out
    cdef double *best = <double *> malloc(max(t, 1) * sizeof(double))
    if best == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(n_rows):
                filled = 0
                for j in range(n):
                    if j == self_index[r]:
                        continue
                    s = sims[r, j]
                    if filled == t:
                        # strict: an equal value never displaces a lower index
                        if t == 0 or not (s > best[t - 1]):
                            continue
                        pos = t - 1
                    else:
                        pos = filled
                        filled += 1
                    while pos > 0 and s > best[pos - 1]:
                        best[pos] = best[pos - 1]
                        idx[r, pos] = idx[r, pos - 1]
                        pos -= 1
                    best[pos] = s
                    idx[r, pos] = j
    finally:
        free(best)
    return out


def scatter_add_rows(double[:, ::1] out, const cnp.int64_t[::1] index, const floating[:, ::1] values):
    """In place ``out[index[m]] += values[m]`` for each m in order."""
    cdef Py_ssize_t m, k, d = out.shape[1], row
    with nogil:
        for m in range(index.shape[0]):
            row = index[m]
            for k in range(d):
                out[row, k] += values[m, k]
