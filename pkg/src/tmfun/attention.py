"""Modality-aware attention, multi-step fusion and scoring.

Attention is conditioned on the user of each (user, item) pair: the query is
the propagated user embedding and the keys/values are the item's ID, visual,
textual and multimodal embeddings, in that order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .datamodel import Hyperparams
from .errors import InvalidInput, NonFiniteInput
from .propagation import PropagatedEmbeddings


class AttentionWeights(NamedTuple):
    weights: np.ndarray  # (..., 4), sums to one over the last axis
    logits: np.ndarray  # (..., 4), dot(query, key) / sqrt(d)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def attention_logits(xu: np.ndarray, xq_set: np.ndarray) -> np.ndarray:
    xu = np.asarray(xu)
    xq_set = np.asarray(xq_set)
    if xq_set.shape[-2:] != (4, xu.shape[-1]):
        raise InvalidInput(f"expected four key vectors of length {xu.shape[-1]}, got {xq_set.shape}")
    return np.einsum("...d,...qd->...q", xu, xq_set) / np.sqrt(xu.shape[-1])


def attention_weights(xu: np.ndarray, xq_set: np.ndarray) -> AttentionWeights:
    """Softmax over the four modality logits; broadcasts over leading axes."""
    if not (np.all(np.isfinite(xu)) and np.all(np.isfinite(xq_set))):
        raise NonFiniteInput("attention input contains NaN or Inf")
    logits = attention_logits(xu, xq_set)
    return AttentionWeights(softmax(logits), logits)


def attend_fuse(weights, xq_set: np.ndarray) -> np.ndarray:
    w = weights.weights if isinstance(weights, AttentionWeights) else np.asarray(weights)
    return np.einsum("...q,...qd->...d", w, xq_set)


def contrastive_fuse(hv: np.ndarray, ht: np.ndarray, mu: float) -> np.ndarray:
    if not 0.0 <= mu <= 1.0:
        raise InvalidInput("mu must lie in [0, 1]")
    return mu * np.asarray(hv) + (1.0 - mu) * np.asarray(ht)


def compose_final(e_i, h_m, h_f, use_attention: bool = True, use_multimodal: bool = True) -> np.ndarray:
    """Final item feature: ID part plus the multimodal part (attention output + fused feature)."""
    e_i = np.asarray(e_i)
    if not use_multimodal:
        return e_i.copy()
    if not use_attention:
        return e_i + np.asarray(h_f)
    return e_i + (np.asarray(h_m) + np.asarray(h_f))


def score(yu: np.ndarray, yi: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(yu) * np.asarray(yi), axis=-1)


def top_k(scores, exclude, k: int) -> np.ndarray:
    """Highest-scoring items outside ``exclude``; ties go to the lower index."""
    if k < 1:
        raise InvalidInput("k must be >= 1")
    s = np.array(scores, dtype=np.float64)
    keep = np.ones(len(s), dtype=bool)
    keep[np.asarray(list(exclude), dtype=np.int64)] = False
    candidates = np.flatnonzero(keep)
    order = np.argsort(-s[candidates], kind="stable")
    return candidates[order[:k]]


@dataclass(eq=False)
class PairCache:
    """Per-pair intermediates kept for the backward pass."""

    users: np.ndarray
    items: np.ndarray
    xu: np.ndarray  # (B, d)
    keys: np.ndarray | None  # (B, 4, d) ordered i, v, t, m
    weights: np.ndarray | None  # (B, 4)
    raw: np.ndarray | None  # (B, 4) dot(xu, key) before scaling
    y_item: np.ndarray  # (B, d)
    scores: np.ndarray  # (B,)


def pair_scores(emb: PropagatedEmbeddings, users, items, hp: Hyperparams) -> PairCache:
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    xu = emb.xu_tilde[users]
    e_i = emb.xi_tilde[items]
    if not hp.use_multimodal:
        return PairCache(users, items, xu, None, None, None, e_i, score(xu, e_i))
    keys = np.stack(
        [e_i, emb.xv_tilde[items], emb.xt_tilde[items], emb.xm_tilde[items]], axis=1
    )
    att = attention_weights(xu, keys)
    h_m = attend_fuse(att, keys)
    h_f = contrastive_fuse(keys[:, 1], keys[:, 2], hp.mu)
    y = compose_final(e_i, h_m, h_f, hp.use_attention, True)
    raw = np.einsum("bd,bqd->bq", xu, keys)
    return PairCache(users, items, xu, keys, att.weights, raw, y, score(xu, y))


def score_all_items(emb: PropagatedEmbeddings, users, hp: Hyperparams) -> np.ndarray:
    """Scores of every item for each user in ``users``; shape (len(users), n_items).

    Uses ``dot(xu, h_m) = sum_q a_q dot(xu, x_q)`` so no per-pair vectors are built.
    """
    xu = emb.xu_tilde[np.asarray(users, dtype=np.int64)]
    r_id = xu @ emb.xi_tilde.T
    if not hp.use_multimodal:
        return r_id
    r_v = xu @ emb.xv_tilde.T
    r_t = xu @ emb.xt_tilde.T
    out = r_id + hp.mu * r_v + (1.0 - hp.mu) * r_t
    if hp.use_attention:
        raw = np.stack([r_id, r_v, r_t, xu @ emb.xm_tilde.T], axis=-1)
        w = softmax(raw / np.sqrt(xu.shape[-1]))
        out = out + np.einsum("uiq,uiq->ui", w, raw)
    return out
