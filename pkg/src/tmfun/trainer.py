"""Deterministic mini-batch training with Adam and validation-driven early stopping.

The single random stream is consumed in a fixed order: parameter init
(user, item, visual projection, textual projection), then for each epoch one
shuffle of the train pairs followed by the negative draws of each batch.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .datamodel import Dataset, Hyperparams, ModelParams
from .errors import NonFiniteGradient, SamplingExhausted
from .evaluation import EvalReport, evaluate
from .graph import GraphBundle
from .losses import LossBreakdown, loss_and_grad

log = logging.getLogger(__name__)


def xavier_init(shape, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Glorot uniform init on [-b, b] with b = sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(n_users: int, n_items: int, dim_v: int, dim_t: int, d: int, rng, dtype=np.float32) -> ModelParams:
    return ModelParams(
        user_emb=xavier_init((n_users, d), rng, dtype),
        item_emb=xavier_init((n_items, d), rng, dtype),
        proj_v=xavier_init((dim_v, d), rng, dtype),
        proj_t=xavier_init((dim_t, d), rng, dtype),
    )


def sample_negatives(ds: Dataset, pairs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One uniform non-interacted item per (user, positive) pair; returns (B, 3) triples."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    users = pairs[:, 0]
    codes = ds.train_codes
    neg = np.empty(len(pairs), dtype=np.int64)
    todo = np.arange(len(pairs))
    max_rounds = ds.n_items * 50
    rounds = 0
    while todo.size:
        if rounds >= max_rounds:
            u = ds.user_tokens[users[todo[0]]]
            raise SamplingExhausted(f"no negative item found for user {u!r} after {max_rounds} draws")
        draw = rng.integers(0, ds.n_items, size=todo.size)
        probe = users[todo] * ds.n_items + draw
        pos = np.searchsorted(codes, probe)
        hit = (pos < len(codes)) & (codes[np.minimum(pos, len(codes) - 1)] == probe)
        neg[todo[~hit]] = draw[~hit]
        todo = todo[hit]
        rounds += 1
    return np.column_stack([pairs, neg])


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        tensors = params.as_dict()
        return cls(
            m={k: np.zeros_like(p) for k, p in tensors.items()},
            v={k: np.zeros_like(p) for k, p in tensors.items()},
        )


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient of {name} is not finite")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.as_dict().items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.dtype)


@dataclass
class EpochRecord:
    epoch: int
    loss: LossBreakdown
    recall: float
    ndcg: float

    def as_json(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss_total": self.loss.total,
            "loss_bpr": self.loss.bpr,
            "loss_mmbpr": self.loss.mmbpr,
            "loss_c": self.loss.contrastive,
            "recall": self.recall,
            "ndcg": self.ndcg,
        }


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_recall: float = float("-inf")
    best_ndcg: float = 0.0
    stop_reason: str = ""
    threads: str = field(default_factory=lambda: os.environ.get("OMP_NUM_THREADS", str(os.cpu_count())))
    backend: str = kernels.BACKEND

    def summary(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "best_recall": self.best_recall,
            "best_ndcg": self.best_ndcg,
            "epochs_run": len(self.epochs),
            "stop_reason": self.stop_reason,
            "threads": self.threads,
            "backend": self.backend,
        }


def _mean_losses(parts: list[LossBreakdown], weights: list[int]) -> LossBreakdown:
    w = np.asarray(weights, dtype=np.float64) / np.sum(weights)
    fields_ = ("bpr", "mmbpr", "contrastive", "total", "reg")
    vals = {f: float(np.dot(w, [getattr(p, f) for p in parts])) for f in fields_}
    return LossBreakdown(**vals)


def fit(
    ds: Dataset,
    bundle: GraphBundle,
    fv: np.ndarray,
    ft: np.ndarray,
    hp: Hyperparams,
    rng: np.random.Generator | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
    dtype=np.float32,
) -> tuple[ModelParams, TrainReport]:
    """Train and return the parameters of the best validation epoch."""
    rng = np.random.default_rng(hp.seed) if rng is None else rng
    fv = np.asarray(fv, dtype=dtype)
    ft = np.asarray(ft, dtype=dtype)
    params = init_params(ds.n_users, ds.n_items, fv.shape[1], ft.shape[1], hp.d, rng, dtype)
    state = AdamState.for_params(params)
    report = TrainReport()
    best = params.copy()
    waited = 0
    report.stop_reason = "max_epochs"
    train = ds.train
    for epoch in range(1, hp.max_epochs + 1):
        order = rng.permutation(len(train))
        parts, sizes = [], []
        for lo in range(0, len(order), hp.batch_size):
            triples = sample_negatives(ds, train[order[lo:lo + hp.batch_size]], rng)
            loss, grads = loss_and_grad(params, bundle, fv, ft, hp, triples)
            adam_step(params, grads, state, hp.lr)
            parts.append(loss)
            sizes.append(len(triples))
        val: EvalReport = evaluate(params, bundle, fv, ft, ds, hp, split="val", k=hp.k_eval)
        record = EpochRecord(epoch, _mean_losses(parts, sizes), val.recall, val.ndcg)
        report.epochs.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.debug("epoch %d loss %.5f recall %.5f ndcg %.5f", epoch, record.loss.total, val.recall, val.ndcg)
        if val.recall > report.best_recall:
            report.best_recall, report.best_ndcg, report.best_epoch = val.recall, val.ndcg, epoch
            best = params.copy()
            waited = 0
        else:
            waited += 1
            if waited > hp.patience:
                report.stop_reason = "early_stopping"
                break
    return best, report
