"""Linear graph propagation (layer-mean of repeated neighbor aggregation)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .datamodel import Hyperparams, ModelParams, SparseAdjacency
from .errors import InvalidInput
from .graph import GraphBundle


@dataclass(eq=False)
class PropagatedEmbeddings:
    xu_tilde: np.ndarray
    xi_tilde: np.ndarray
    xv_tilde: np.ndarray | None = None
    xt_tilde: np.ndarray | None = None
    xm_tilde: np.ndarray | None = None


def project_features(raw: np.ndarray, proj: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw)
    if raw.ndim != 2 or raw.shape[1] != proj.shape[0]:
        raise InvalidInput(f"cannot project features of shape {raw.shape} with {proj.shape}")
    return raw.astype(proj.dtype, copy=False) @ proj


def spmm(g: SparseAdjacency, x: np.ndarray) -> np.ndarray:
    if x.shape[0] != g.n_cols:
        raise InvalidInput(f"graph has {g.n_cols} columns but input has {x.shape[0]} rows")
    return kernels.spmm(g.row_offsets, g.col_indices, g.weights, np.ascontiguousarray(x))


def propagate(g: SparseAdjacency, x: np.ndarray, n_layers: int) -> np.ndarray:
    """Mean of ``x, g x, g^2 x, ..., g^L x`` (summed in float64)."""
    if n_layers < 0:
        raise InvalidInput("n_layers must be >= 0")
    acc = x.astype(np.float64)
    cur = x
    for _ in range(n_layers):
        cur = spmm(g, cur)
        acc += cur
    acc /= n_layers + 1
    return acc.astype(x.dtype)


def propagate_bipartite(g: SparseAdjacency, user_emb: np.ndarray, item_emb: np.ndarray, n_layers: int):
    n_users = user_emb.shape[0]
    if g.n_rows != n_users + item_emb.shape[0]:
        raise InvalidInput("interaction graph size does not match users + items")
    out = propagate(g, np.concatenate([user_emb, item_emb]), n_layers)
    return out[:n_users], out[n_users:]


def propagate_item_graph(g: SparseAdjacency, x: np.ndarray, n_layers: int) -> np.ndarray:
    if g.n_rows != g.n_cols or g.n_rows != x.shape[0]:
        raise InvalidInput("item graph must be square over the items of x")
    return propagate(g, x, n_layers)


def forward_all(
    params: ModelParams, bundle: GraphBundle, fv: np.ndarray, ft: np.ndarray, hp: Hyperparams
) -> PropagatedEmbeddings:
    if hp.cf_model == "mf":
        xu, xi = params.user_emb, params.item_emb
    else:
        xu, xi = propagate_bipartite(bundle.g_interaction, params.user_emb, params.item_emb, hp.n_layers_ui)
    if not hp.use_multimodal:
        return PropagatedEmbeddings(xu, xi)
    pv = project_features(fv, params.proj_v)
    pt = project_features(ft, params.proj_t)
    layers = hp.n_layers_item
    return PropagatedEmbeddings(
        xu,
        xi,
        propagate_item_graph(bundle.g_visual, pv, layers),
        propagate_item_graph(bundle.g_textual, pt, layers),
        propagate_item_graph(bundle.g_item, (pv + pt) / 2, layers),
    )
