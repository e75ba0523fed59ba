"""Selects the compiled kernels when available, else the numpy/scipy fallback.

Set ``TMFUN_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

if os.environ.get("TMFUN_PURE_PYTHON"):
    from . import _fallback as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        from . import _fallback as _impl

        BACKEND = "python"


def _floating(x):
    x = np.asarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    return np.ascontiguousarray(x)


def spmm(row_offsets, col_indices, weights, x):
    """CSR (float32 weights) times dense ``x``; output has ``x``'s dtype, sums run in float64."""
    return _impl.spmm(
        np.ascontiguousarray(row_offsets, dtype=np.int64),
        np.ascontiguousarray(col_indices, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float32),
        _floating(x),
    )


def topn_select(sims, self_index, top_n):
    return _impl.topn_select(
        np.ascontiguousarray(sims, dtype=np.float64),
        np.ascontiguousarray(self_index, dtype=np.int64),
        int(top_n),
    )


def scatter_add_rows(out, index, values):
    """``out[index[m]] += values[m]`` in order; ``out`` must be a C-contiguous float64 matrix."""
    if out.dtype != np.float64 or not out.flags.c_contiguous:
        raise TypeError("scatter target must be a C-contiguous float64 array")
    _impl.scatter_add_rows(out, np.ascontiguousarray(index, dtype=np.int64), _floating(values))


__all__ = ["BACKEND", "scatter_add_rows", "spmm", "topn_select"]
