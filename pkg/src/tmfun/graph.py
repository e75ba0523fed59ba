"""Item kNN graphs from modality features, normalization, frozen fusion and the user-item graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .datamodel import Dataset, SparseAdjacency
from .errors import InvalidInput

_BLOCK_ROWS = 1024


@dataclass(frozen=True, eq=False)
class GraphBundle:
    g_visual: SparseAdjacency
    g_textual: SparseAdjacency
    g_item: SparseAdjacency
    g_interaction: SparseAdjacency


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise InvalidInput(f"length mismatch: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def build_knn_graph(features: np.ndarray, top_n: int) -> SparseAdjacency:
    """Keep, for each item, its ``top_n`` most cosine-similar other items.

    Weights are the similarities clamped at zero. Similarities are computed
    blockwise in float64 so memory stays O(block * n_items).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInput("features must be a 2-D matrix")
    n = x.shape[0]
    if n < 2:
        raise InvalidInput("need at least two items to build a kNN graph")
    if top_n < 1:
        raise InvalidInput("top_n must be >= 1")
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    t = min(top_n, n - 1)
    cols = np.empty((n, t), dtype=np.int64)
    vals = np.empty((n, t), dtype=np.float32)
    for lo in range(0, n, _BLOCK_ROWS):
        hi = min(lo + _BLOCK_ROWS, n)
        denom = norms[lo:hi, None] * norms[None, :]
        sims = np.zeros((hi - lo, n))
        np.divide(x[lo:hi] @ x.T, denom, out=sims, where=denom > 0)
        idx = kernels.topn_select(sims, np.arange(lo, hi, dtype=np.int64), t)
        chosen = np.take_along_axis(sims, idx, axis=1)
        order = np.argsort(idx, axis=1)
        cols[lo:hi] = np.take_along_axis(idx, order, axis=1)
        vals[lo:hi] = np.maximum(np.take_along_axis(chosen, order, axis=1), 0.0)
    offsets = np.arange(n + 1, dtype=np.int64) * t
    return SparseAdjacency(n, n, offsets, cols.ravel(), vals.ravel())


def normalize_sym(adj: SparseAdjacency) -> SparseAdjacency:
    """Symmetrize (elementwise max with the transpose) then scale by 1/sqrt(deg_i deg_j).

    Explicit zero-weight edges stay in the pattern; zero-degree rows stay zero.
    """
    if adj.n_rows != adj.n_cols:
        raise InvalidInput("normalize_sym needs a square graph")
    n = adj.n_rows
    if adj.nnz == 0:
        return SparseAdjacency.empty(n)
    rows = np.repeat(np.arange(n, dtype=np.int64), adj.row_lengths())
    r = np.concatenate([rows, adj.col_indices])
    c = np.concatenate([adj.col_indices, rows])
    w = np.tile(adj.weights.astype(np.float64), 2)
    key = r * n + c
    order = np.argsort(key, kind="stable")
    key, w = key[order], w[order]
    first = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    w = np.maximum.reduceat(w, first)
    r, c = key[first] // n, key[first] % n
    deg = np.bincount(r, weights=w, minlength=n)
    inv_sqrt = np.zeros(n)
    np.divide(1.0, np.sqrt(deg), out=inv_sqrt, where=deg > 0)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=n), out=offsets[1:])
    return SparseAdjacency(n, n, offsets, c, w * inv_sqrt[r] * inv_sqrt[c])


def fuse_graphs(gv: SparseAdjacency, gt: SparseAdjacency, lam: float) -> SparseAdjacency:
    """Frozen fusion ``lam * gv + (1 - lam) * gt`` on the union pattern.

    A graph whose coefficient is zero contributes neither weight nor pattern,
    so the boundary values return the other graph unchanged.
    """
    if gv.shape != gt.shape:
        raise InvalidInput(f"shape mismatch: {gv.shape} vs {gt.shape}")
    if not 0.0 <= lam <= 1.0:
        raise InvalidInput("lambda must lie in [0, 1]")
    if lam == 1.0:
        return SparseAdjacency(*gv.shape, gv.row_offsets.copy(), gv.col_indices.copy(), gv.weights.copy())
    if lam == 0.0:
        return SparseAdjacency(*gt.shape, gt.row_offsets.copy(), gt.col_indices.copy(), gt.weights.copy())
    n_rows, n_cols = gv.shape
    parts = []
    for g, coef in ((gv, lam), (gt, 1.0 - lam)):
        rows = np.repeat(np.arange(n_rows, dtype=np.int64), g.row_lengths())
        parts.append((rows, g.col_indices, coef * g.weights.astype(np.float64)))
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    return SparseAdjacency.from_scipy(sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols)))


def build_interaction_graph(ds: Dataset) -> SparseAdjacency:
    """Symmetric normalized bipartite graph over users then items, from train pairs only."""
    if len(ds.train) == 0:
        raise InvalidInput("train split is empty")
    codes = np.unique(ds.train[:, 0] * ds.n_items + ds.train[:, 1])
    users, items = codes // ds.n_items, codes % ds.n_items
    deg_u = np.bincount(users, minlength=ds.n_users).astype(np.float64)
    deg_i = np.bincount(items, minlength=ds.n_items).astype(np.float64)
    w = 1.0 / (np.sqrt(deg_u[users]) * np.sqrt(deg_i[items]))
    n = ds.n_users + ds.n_items
    rows = np.concatenate([users, items + ds.n_users])
    cols = np.concatenate([items + ds.n_users, users])
    return SparseAdjacency.from_scipy(sp.coo_matrix((np.tile(w, 2), (rows, cols)), shape=(n, n)))


def build_bundle(ds: Dataset, fv: np.ndarray, ft: np.ndarray, top_n: int, lam: float) -> GraphBundle:
    g_visual = normalize_sym(build_knn_graph(fv, top_n))
    g_textual = normalize_sym(build_knn_graph(ft, top_n))
    return GraphBundle(
        g_visual=g_visual,
        g_textual=g_textual,
        g_item=fuse_graphs(g_visual, g_textual, lam),
        g_interaction=build_interaction_graph(ds),
    )
