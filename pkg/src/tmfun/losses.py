"""Training objective (BPR + weighted multimodal BPR + weighted InfoNCE) and its exact gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .attention import PairCache, pair_scores
from .datamodel import Hyperparams, ModelParams
from .errors import InvalidInput
from .graph import GraphBundle
from .propagation import PropagatedEmbeddings, forward_all, propagate

_NORM_EPS = 1e-12


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


@dataclass(frozen=True)
class LossBreakdown:
    bpr: float
    mmbpr: float
    contrastive: float
    total: float
    reg: float = 0.0


def total_loss(bpr: float, mmbpr: float, contrastive: float, alpha: float, beta: float, reg: float = 0.0) -> LossBreakdown:
    if alpha < 0 or beta < 0:
        raise InvalidInput("alpha and beta must be >= 0")
    total = float(bpr) + alpha * float(mmbpr) + beta * float(contrastive) + float(reg)
    return LossBreakdown(float(bpr), float(mmbpr), float(contrastive), total, float(reg))


def bpr_loss(scores_pos, scores_neg) -> float:
    margin = np.asarray(scores_pos, dtype=np.float64) - np.asarray(scores_neg, dtype=np.float64)
    if margin.size == 0:
        return 0.0
    return float(np.mean(softplus(-margin)))


def mm_bpr_loss(batch, yu: np.ndarray, h_v: np.ndarray, h_t: np.ndarray) -> float:
    """Pairwise ranking loss on the visual and textual item features, averaged over both."""
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    if len(batch) == 0:
        return 0.0
    u, i, j = batch.T
    xu = np.asarray(yu, dtype=np.float64)[u]
    terms = []
    for h in (h_v, h_t):
        h = np.asarray(h, dtype=np.float64)
        terms.append(softplus(-np.sum(xu * (h[i] - h[j]), axis=1)))
    return float(np.mean(terms))


def _unit_rows(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.maximum(np.linalg.norm(h, axis=1), _NORM_EPS)
    return h / norms[:, None], norms


def _info_nce(za: np.ndarray, zb: np.ndarray, tau: float):
    """Symmetric InfoNCE between aligned unit rows; returns loss and d loss / d logits."""
    logits = (za @ zb.T) / tau
    n = len(logits)
    diag = np.diagonal(logits)
    lse_rows = np.logaddexp.reduce(logits, axis=1)
    lse_cols = np.logaddexp.reduce(logits, axis=0)
    loss = 0.5 * (np.mean(lse_rows - diag) + np.mean(lse_cols - diag))
    p_rows = np.exp(logits - lse_rows[:, None])
    p_cols = np.exp(logits - lse_cols[None, :])
    eye = np.eye(n)
    d_logits = 0.5 * ((p_rows - eye) + (p_cols - eye)) / n
    return max(float(loss), 0.0), d_logits


def contrastive_loss(h_v: np.ndarray, h_t: np.ndarray, h_i: np.ndarray, tau: float) -> float:
    """InfoNCE alignment of each modality view with the ID view over in-batch items."""
    return _contrastive(h_v, h_t, h_i, tau)[0]


def _contrastive(h_v, h_t, h_i, tau):
    if tau <= 0:
        raise InvalidInput("tau must be > 0")
    h_i = np.asarray(h_i, dtype=np.float64)
    if len(h_i) == 0:
        raise InvalidInput("contrastive loss needs at least one item")
    zb, nb = _unit_rows(h_i)
    loss = 0.0
    grads = []
    d_hi = np.zeros_like(h_i)
    for h in (h_v, h_t):
        za, na = _unit_rows(np.asarray(h, dtype=np.float64))
        part, d_logits = _info_nce(za, zb, tau)
        loss += part / 2
        d_za = (d_logits @ zb) / (2 * tau)
        d_zb = (d_logits.T @ za) / (2 * tau)
        grads.append(_unit_backward(za, na, d_za))
        d_hi += _unit_backward(zb, nb, d_zb)
    return loss, grads[0], grads[1], d_hi


def _unit_backward(z: np.ndarray, norms: np.ndarray, dz: np.ndarray) -> np.ndarray:
    radial = np.sum(z * dz, axis=1, keepdims=True)
    live = (norms > _NORM_EPS)[:, None]
    return np.where(live, dz - z * radial, dz) / norms[:, None]


@dataclass(eq=False)
class BatchState:
    """Forward intermediates for one triplet batch."""

    triples: np.ndarray
    emb: PropagatedEmbeddings
    pos: PairCache
    neg: PairCache
    cl_items: np.ndarray
    loss: LossBreakdown


def forward_batch(
    params: ModelParams, bundle: GraphBundle, fv: np.ndarray, ft: np.ndarray, hp: Hyperparams, triples
) -> BatchState:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        raise InvalidInput("empty triplet batch")
    emb = forward_all(params, bundle, fv, ft, hp)
    u, i, j = triples.T
    pos = pair_scores(emb, u, i, hp)
    neg = pair_scores(emb, u, j, hp)
    bpr = bpr_loss(pos.scores, neg.scores)
    cl_items = np.unique(i)
    mm = cl = 0.0
    if hp.use_multimodal:
        mm = mm_bpr_loss(triples, emb.xu_tilde, emb.xv_tilde, emb.xt_tilde)
        cl = contrastive_loss(emb.xv_tilde[cl_items], emb.xt_tilde[cl_items], emb.xi_tilde[cl_items], hp.tau)
    reg = 0.0
    if hp.l2 > 0:
        sq = [np.sum(params.user_emb[u].astype(np.float64) ** 2)]
        sq += [np.sum(params.item_emb[k].astype(np.float64) ** 2) for k in (i, j)]
        reg = hp.l2 * float(sum(sq)) / (2 * len(triples))
    return BatchState(triples, emb, pos, neg, cl_items, total_loss(bpr, mm, cl, hp.alpha, hp.beta, reg))


def _pair_backward(cache: PairCache, g: np.ndarray, hp: Hyperparams, grads: dict) -> None:
    """Accumulate d score / d (propagated embeddings) * g for every pair in the cache."""
    g = g[:, None]
    xu = cache.xu.astype(np.float64)
    d_xu = g * cache.y_item
    d_id = g * xu
    kernels.scatter_add_rows(grads["xi"], cache.items, d_id)
    if hp.use_multimodal:
        mu = hp.mu
        kernels.scatter_add_rows(grads["xv"], cache.items, mu * d_id)
        kernels.scatter_add_rows(grads["xt"], cache.items, (1.0 - mu) * d_id)
        if hp.use_attention:
            a, raw = cache.weights.astype(np.float64), cache.raw.astype(np.float64)
            inv_sqrt_d = 1.0 / np.sqrt(xu.shape[1])
            fused = np.sum(a * raw, axis=1, keepdims=True)
            # d(sum_q a_q raw_q) / d logit_q = a_q (raw_q - fused)
            d_logit = a * (raw - fused) * inv_sqrt_d
            d_xu = d_xu + g * np.einsum("bq,bqd->bd", d_logit, cache.keys.astype(np.float64))
            coef = g * (a + d_logit)
            for q, name in enumerate(("xi", "xv", "xt", "xm")):
                kernels.scatter_add_rows(grads[name], cache.items, coef[:, q:q + 1] * xu)
    kernels.scatter_add_rows(grads["xu"], cache.users, d_xu)


def backward(state: BatchState, params: ModelParams, bundle: GraphBundle, fv, ft, hp: Hyperparams) -> dict[str, np.ndarray]:
    """Exact gradients of the total batch loss for every trainable tensor."""
    emb = state.emb
    n_users, d = emb.xu_tilde.shape
    n_items = emb.xi_tilde.shape[0]
    grads = {"xu": np.zeros((n_users, d)), "xi": np.zeros((n_items, d))}
    for name in ("xv", "xt", "xm"):
        grads[name] = np.zeros((n_items, d))
    u, i, j = state.triples.T
    batch = len(state.triples)

    margin = state.pos.scores.astype(np.float64) - state.neg.scores.astype(np.float64)
    g_pos = -sigmoid(-margin) / batch
    _pair_backward(state.pos, g_pos, hp, grads)
    _pair_backward(state.neg, -g_pos, hp, grads)

    if hp.use_multimodal and hp.alpha > 0:
        xu = emb.xu_tilde[u].astype(np.float64)
        for name, h in (("xv", emb.xv_tilde), ("xt", emb.xt_tilde)):
            diff = (h[i] - h[j]).astype(np.float64)
            dm = hp.alpha * (-sigmoid(-np.sum(xu * diff, axis=1)) / (2 * batch))[:, None]
            kernels.scatter_add_rows(grads["xu"], u, dm * diff)
            kernels.scatter_add_rows(grads[name], i, dm * xu)
            kernels.scatter_add_rows(grads[name], j, -dm * xu)

    if hp.use_multimodal and hp.beta > 0:
        items = state.cl_items
        _, d_v, d_t, d_i = _contrastive(
            emb.xv_tilde[items], emb.xt_tilde[items], emb.xi_tilde[items], hp.tau
        )
        kernels.scatter_add_rows(grads["xv"], items, hp.beta * d_v)
        kernels.scatter_add_rows(grads["xt"], items, hp.beta * d_t)
        kernels.scatter_add_rows(grads["xi"], items, hp.beta * d_i)

    if hp.cf_model == "mf":
        g_user, g_item = grads["xu"], grads["xi"]
    else:
        stacked = propagate(bundle.g_interaction.T, np.concatenate([grads["xu"], grads["xi"]]), hp.n_layers_ui)
        g_user, g_item = stacked[:n_users], stacked[n_users:]

    if hp.l2 > 0:
        g_user = g_user.copy()
        g_item = g_item.copy()
        scale = hp.l2 / batch
        kernels.scatter_add_rows(g_user, u, scale * params.user_emb[u])
        kernels.scatter_add_rows(g_item, i, scale * params.item_emb[i])
        kernels.scatter_add_rows(g_item, j, scale * params.item_emb[j])

    dtype = params.dtype
    out = {"user_emb": g_user.astype(dtype), "item_emb": g_item.astype(dtype)}
    if hp.use_multimodal:
        layers = hp.n_layers_item
        g_m = 0.5 * propagate(bundle.g_item.T, grads["xm"], layers)
        g_fv = propagate(bundle.g_visual.T, grads["xv"], layers) + g_m
        g_ft = propagate(bundle.g_textual.T, grads["xt"], layers) + g_m
        out["proj_v"] = (np.asarray(fv, dtype=np.float64).T @ g_fv).astype(dtype)
        out["proj_t"] = (np.asarray(ft, dtype=np.float64).T @ g_ft).astype(dtype)
    else:
        out["proj_v"] = np.zeros_like(params.proj_v)
        out["proj_t"] = np.zeros_like(params.proj_t)
    return out


def loss_and_grad(params, bundle, fv, ft, hp, triples) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    state = forward_batch(params, bundle, fv, ft, hp, triples)
    return state.loss, backward(state, params, bundle, fv, ft, hp)
