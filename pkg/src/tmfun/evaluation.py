"""Recall@K / NDCG@K with full-catalog ranking and train-item exclusion."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .attention import score_all_items
from .datamodel import Dataset, Hyperparams, ModelParams
from .errors import InvalidInput
from .graph import GraphBundle
from .propagation import forward_all

_USER_CHUNK = 512


@dataclass(frozen=True)
class EvalReport:
    k: int
    recall: float
    ndcg: float
    n_users_evaluated: int
    n_users_skipped: int = 0

    def as_json(self) -> dict:
        return asdict(self)


def recall_at_k(ranked, relevant, k: int) -> float | None:
    """Fraction of ``relevant`` found in the first ``k`` of ``ranked``; None when nothing is relevant."""
    relevant = set(relevant)
    if not relevant:
        return None
    hits = sum(1 for item in list(ranked)[:k] if item in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked, relevant, k: int) -> float | None:
    relevant = set(relevant)
    if not relevant:
        return None
    dcg = sum(1.0 / math.log2(p + 2) for p, item in enumerate(list(ranked)[:k]) if item in relevant)
    idcg = sum(1.0 / math.log2(p + 2) for p in range(min(k, len(relevant))))
    return dcg / idcg


def rank_top_k(scores: np.ndarray, exclude: list[np.ndarray], k: int) -> list[np.ndarray]:
    """Row-wise top-k of a score matrix with per-row exclusions; ties keep the lower index."""
    s = np.array(scores, dtype=np.float64)
    for row, items in enumerate(exclude):
        s[row, items] = -np.inf
    order = np.argsort(-s, axis=1, kind="stable")[:, :k]
    out = []
    for row in range(len(s)):
        top = order[row]
        out.append(top[np.isfinite(s[row, top])])
    return out


def evaluate_scorer(
    scorer: Callable[[np.ndarray], np.ndarray], ds: Dataset, split: str = "test", k: int = 20
) -> EvalReport:
    """Evaluate any ``scorer(users) -> (len(users), n_items)`` score matrix."""
    if k < 1:
        raise InvalidInput("k must be >= 1")
    relevant = ds.items_by_user(split)
    train = ds.items_by_user("train")
    users = np.array([u for u in range(ds.n_users) if len(relevant[u])], dtype=np.int64)
    recall_sum = ndcg_sum = 0.0
    for lo in range(0, len(users), _USER_CHUNK):
        chunk = users[lo:lo + _USER_CHUNK]
        ranked = rank_top_k(scorer(chunk), [train[u] for u in chunk], k)
        for u, top in zip(chunk, ranked):
            recall_sum += recall_at_k(top, relevant[u], k)
            ndcg_sum += ndcg_at_k(top, relevant[u], k)
    n = len(users)
    return EvalReport(
        k=k,
        recall=recall_sum / n if n else 0.0,
        ndcg=ndcg_sum / n if n else 0.0,
        n_users_evaluated=n,
        n_users_skipped=ds.n_users - n,
    )


def model_scorer(params: ModelParams, bundle: GraphBundle, fv, ft, hp: Hyperparams):
    fv = np.asarray(fv, dtype=params.dtype)
    ft = np.asarray(ft, dtype=params.dtype)
    emb = forward_all(params, bundle, fv, ft, hp)
    return lambda users: score_all_items(emb, users, hp)


def evaluate(
    params: ModelParams,
    bundle: GraphBundle,
    fv,
    ft,
    ds: Dataset,
    hp: Hyperparams,
    split: str = "val",
    k: int | None = None,
) -> EvalReport:
    return evaluate_scorer(model_scorer(params, bundle, fv, ft, hp), ds, split, hp.k_eval if k is None else k)


def recommend(params, bundle, fv, ft, ds: Dataset, hp: Hyperparams, user: int, k: int = 10):
    """Top-k unseen items for one user as (item indices, scores)."""
    scores = model_scorer(params, bundle, fv, ft, hp)(np.array([user]))
    top = rank_top_k(scores, [ds.items_by_user("train")[user]], k)[0]
    return top, scores[0, top]
