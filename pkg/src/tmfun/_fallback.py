"""Uncompiled versions of the kernels in ``_kernels.pyx``; same signatures, same results."""
import numpy as np
import scipy.sparse as sp


def spmm(row_offsets, col_indices, weights, x):
    x = np.asarray(x)
    n_rows = len(row_offsets) - 1
    a = sp.csr_matrix(
        (np.asarray(weights, dtype=np.float64), col_indices, row_offsets), shape=(n_rows, x.shape[0])
    )
    return (a @ x.astype(np.float64)).astype(x.dtype)


def topn_select(sims, self_index, top_n):
    sims = np.array(sims, dtype=np.float64)
    n_rows, n = sims.shape
    t = min(top_n, n - 1) if n > 0 else 0
    rows = np.arange(n_rows)
    has_self = (self_index >= 0) & (self_index < n)
    # self sorts after every real value; stable sort keeps lower index first among ties
    sims[rows[has_self], self_index[has_self]] = -np.inf
    order = np.argsort(-sims, axis=1, kind="stable")
    return np.ascontiguousarray(order[:, :t], dtype=np.int64)


def scatter_add_rows(out, index, values):
    np.add.at(out, index, np.asarray(values, dtype=np.float64))
