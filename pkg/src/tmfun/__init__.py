"""Multimodal recommendation: modality kNN graphs, per-pair attention over item views,
trained with BPR, modality BPR and a contrastive alignment term."""
from .datamodel import (
    Dataset,
    Hyperparams,
    ModalityId,
    ModelParams,
    SparseAdjacency,
    remap_ids,
    validate_dataset,
)
from .evaluation import EvalReport, evaluate, ndcg_at_k, recall_at_k
from .graph import GraphBundle, build_bundle, build_interaction_graph, build_knn_graph, fuse_graphs, normalize_sym
from .kernels import BACKEND
from .losses import LossBreakdown, loss_and_grad
from .trainer import TrainReport, fit

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "EvalReport",
    "GraphBundle",
    "Hyperparams",
    "LossBreakdown",
    "ModalityId",
    "ModelParams",
    "SparseAdjacency",
    "TrainReport",
    "build_bundle",
    "build_interaction_graph",
    "build_knn_graph",
    "evaluate",
    "fit",
    "fuse_graphs",
    "loss_and_grad",
    "ndcg_at_k",
    "normalize_sym",
    "recall_at_k",
    "remap_ids",
    "validate_dataset",
]
