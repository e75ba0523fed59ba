"""Core data types: datasets, sparse graphs, parameters and hyperparameters."""
from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ColdStartUser, InvalidInput, NonFiniteFeature, ShapeMismatch


class ModalityId(enum.IntEnum):
    """Item views that take part in attention; the integer value is the attention slot."""

    ID = 0
    VISUAL = 1
    TEXTUAL = 2
    MULTIMODAL = 3


ATTENTION_MODALITIES = (ModalityId.ID, ModalityId.VISUAL, ModalityId.TEXTUAL, ModalityId.MULTIMODAL)
FEATURE_MODALITIES = (ModalityId.VISUAL, ModalityId.TEXTUAL)


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """Weighted graph in CSR form with float32 weights.

    Rows are canonical: column indices strictly increasing within a row.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.ascontiguousarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.ascontiguousarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "weights", np.ascontiguousarray(self.weights, dtype=np.float32))

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.weights[lo:hi]

    def check(self) -> None:
        """Raise InvalidInput unless the canonical-form invariants hold. O(nnz)."""
        off = self.row_offsets
        if off.shape != (self.n_rows + 1,) or off[0] != 0:
            raise InvalidInput("row_offsets must have length n_rows+1 and start at 0")
        if np.any(np.diff(off) < 0):
            raise InvalidInput("row_offsets must be non-decreasing")
        if off[-1] != len(self.col_indices) or len(self.col_indices) != len(self.weights):
            raise InvalidInput("last offset must equal nnz")
        cols = self.col_indices
        if len(cols) and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise InvalidInput("column index out of range")
        if len(cols) > 1:
            # a non-increase is only allowed where a new row starts
            step = np.diff(cols) <= 0
            starts = np.zeros(len(cols) - 1, dtype=bool)
            row_starts = off[1:-1]
            row_starts = row_starts[(row_starts > 0) & (row_starts < len(cols))]
            starts[row_starts - 1] = True
            if np.any(step & ~starts):
                raise InvalidInput("column indices must be strictly increasing within a row")
        w = self.weights
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidInput("weights must be finite and non-negative")

    def to_scipy(self, dtype=np.float32) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.weights.astype(dtype), self.col_indices, self.row_offsets), shape=self.shape
        )

    @classmethod
    def from_scipy(cls, mat) -> "SparseAdjacency":
        """Canonicalize any scipy sparse matrix; duplicates are summed, explicit zeros kept."""
        coo = sp.coo_matrix(mat)
        n_rows, n_cols = coo.shape
        order = np.lexsort((coo.col, coo.row))
        rows = coo.row[order].astype(np.int64)
        cols = coo.col[order].astype(np.int64)
        vals = coo.data[order].astype(np.float64)
        if len(rows):
            key = rows * n_cols + cols
            first = np.r_[True, key[1:] != key[:-1]]
            group = np.cumsum(first) - 1
            vals = np.bincount(group, weights=vals)
            rows, cols = rows[first], cols[first]
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
        return cls(n_rows, n_cols, offsets, cols, vals.astype(np.float32))

    @classmethod
    def empty(cls, n_rows: int, n_cols: int | None = None) -> "SparseAdjacency":
        n_cols = n_rows if n_cols is None else n_cols
        return cls(n_rows, n_cols, np.zeros(n_rows + 1), np.zeros(0), np.zeros(0))

    def transpose(self) -> "SparseAdjacency":
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), self.row_lengths())
        order = np.lexsort((rows, self.col_indices))
        offsets = np.zeros(self.n_cols + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.col_indices, minlength=self.n_cols), out=offsets[1:])
        return SparseAdjacency(self.n_cols, self.n_rows, offsets, rows[order], self.weights[order])

    @cached_property
    def T(self) -> "SparseAdjacency":
        return self.transpose()

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros(self.shape, dtype=dtype)
        rows = np.repeat(np.arange(self.n_rows), self.row_lengths())
        out[rows, self.col_indices] = self.weights
        return out

    def same_as(self, other: "SparseAdjacency") -> bool:
        """Bit-exact equality of structure and weights."""
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and self.weights.tobytes() == other.weights.tobytes()
        )


@dataclass(frozen=True)
class RemappedPairs:
    pairs: np.ndarray  # (n, 2) int64
    user_tokens: tuple
    item_tokens: tuple


def remap_ids(raw_pairs: Sequence[tuple[Hashable, Hashable]]) -> RemappedPairs:
    """Assign dense 0-based indices to user and item tokens in first-seen order."""
    if len(raw_pairs) == 0:
        raise InvalidInput("no interactions to remap")
    users: dict = {}
    items: dict = {}
    out = np.empty((len(raw_pairs), 2), dtype=np.int64)
    for n, (u, i) in enumerate(raw_pairs):
        out[n, 0] = users.setdefault(u, len(users))
        out[n, 1] = items.setdefault(i, len(items))
    return RemappedPairs(out, tuple(users), tuple(items))


def _as_pairs(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return arr.reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class Dataset:
    n_users: int
    n_items: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    user_tokens: tuple = ()
    item_tokens: tuple = ()

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, _as_pairs(getattr(self, name)))
        if not self.user_tokens:
            object.__setattr__(self, "user_tokens", tuple(str(u) for u in range(self.n_users)))
        if not self.item_tokens:
            object.__setattr__(self, "item_tokens", tuple(str(i) for i in range(self.n_items)))

    def split(self, name: str) -> np.ndarray:
        if name not in ("train", "val", "test"):
            raise InvalidInput(f"unknown split {name!r}")
        return getattr(self, name)

    def items_by_user(self, name: str) -> list[np.ndarray]:
        """Sorted item indices per user for one split."""
        return self._grouped[name]

    @cached_property
    def _grouped(self) -> dict[str, list[np.ndarray]]:
        out = {}
        for name in ("train", "val", "test"):
            pairs = self.split(name)
            order = np.lexsort((pairs[:, 1], pairs[:, 0]))
            users, items = pairs[order, 0], pairs[order, 1]
            bounds = np.searchsorted(users, np.arange(self.n_users + 1))
            out[name] = [items[bounds[u]:bounds[u + 1]] for u in range(self.n_users)]
        return out

    @cached_property
    def train_codes(self) -> np.ndarray:
        """Sorted ``user * n_items + item`` codes of the train split, for fast membership tests."""
        return np.unique(self.train[:, 0] * self.n_items + self.train[:, 1])

    @cached_property
    def user_index(self) -> dict:
        return {tok: n for n, tok in enumerate(self.user_tokens)}


def validate_dataset(ds: Dataset, fv: np.ndarray, ft: np.ndarray) -> None:
    """Check dataset and feature invariants, raising on the first violation."""
    for name in ("train", "val", "test"):
        pairs = ds.split(name)
        if len(pairs) == 0:
            continue
        if pairs.min() < 0 or pairs[:, 0].max() >= ds.n_users or pairs[:, 1].max() >= ds.n_items:
            raise InvalidInput(f"{name} split has indices out of range")
    codes = {n: ds.split(n)[:, 0] * ds.n_items + ds.split(n)[:, 1] for n in ("train", "val", "test")}
    for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
        if np.intersect1d(codes[a], codes[b]).size:
            raise InvalidInput(f"{a} and {b} splits overlap")
    for name, feats in (("visual", fv), ("textual", ft)):
        feats = np.asarray(feats)
        if feats.ndim != 2 or feats.shape[0] != ds.n_items:
            raise ShapeMismatch(
                f"{name} features have {feats.shape[0] if feats.ndim else 0} rows, expected {ds.n_items}"
            )
    train_users = np.zeros(ds.n_users, dtype=bool)
    train_users[ds.train[:, 0]] = True
    for name in ("val", "test"):
        cold = ds.split(name)[~train_users[ds.split(name)[:, 0]], 0]
        if cold.size:
            raise ColdStartUser(f"user {ds.user_tokens[cold[0]]!r} appears in {name} but not in train")
    for name, feats in (("visual", fv), ("textual", ft)):
        if not np.all(np.isfinite(feats)):
            raise NonFiniteFeature(f"{name} features contain NaN or Inf")


@dataclass(eq=False)
class ModelParams:
    """Trainable tensors. Mutated in place only by the trainer."""

    user_emb: np.ndarray
    item_emb: np.ndarray
    proj_v: np.ndarray
    proj_t: np.ndarray

    NAMES = ("user_emb", "item_emb", "proj_v", "proj_t")

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.NAMES}

    @property
    def dtype(self):
        return self.user_emb.dtype

    @property
    def dim(self) -> int:
        return self.user_emb.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.as_dict().items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(**{k: v.astype(dtype) for k, v in self.as_dict().items()})

    def check(self, n_users: int, n_items: int, dim_v: int, dim_t: int) -> None:
        d = self.dim
        expected = {
            "user_emb": (n_users, d),
            "item_emb": (n_items, d),
            "proj_v": (dim_v, d),
            "proj_t": (dim_t, d),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInput(f"{name} contains non-finite values")


@dataclass(frozen=True)
class Hyperparams:
    d: int = 64
    top_n: int = 10
    lambda_: float = 0.5
    mu: float = 0.5
    alpha: float = 1e-3
    beta: float = 1e-3
    tau: float = 0.2
    lr: float = 1e-3
    batch_size: int = 2048
    max_epochs: int = 1000
    patience: int = 20
    k_eval: int = 20
    seed: int = 2023
    n_layers_ui: int = 2
    n_layers_item: int = 1
    cf_model: str = "lightgcn"
    use_attention: bool = True
    use_multimodal: bool = True
    l2: float = 0.0

    def __post_init__(self):
        checks = [
            (0.0 <= self.lambda_ <= 1.0, "lambda must lie in [0, 1]"),
            (0.0 <= self.mu <= 1.0, "mu must lie in [0, 1]"),
            (self.alpha >= 0, "alpha must be >= 0"),
            (self.beta >= 0, "beta must be >= 0"),
            (self.tau > 0, "tau must be > 0"),
            (self.top_n >= 1, "top_n must be >= 1"),
            (self.d >= 1, "d must be >= 1"),
            (self.lr > 0, "lr must be > 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.max_epochs >= 0, "max_epochs must be >= 0"),
            (self.patience >= 0, "patience must be >= 0"),
            (self.k_eval >= 1, "k_eval must be >= 1"),
            (self.n_layers_ui >= 0 and self.n_layers_item >= 0, "layer counts must be >= 0"),
            (self.cf_model in ("lightgcn", "mf"), "cf_model must be 'lightgcn' or 'mf'"),
            (self.l2 >= 0, "l2 must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidInput(msg)

    @classmethod
    def config_keys(cls) -> dict[str, str]:
        """Map of config-file key to dataclass field name."""
        return {f.name.rstrip("_"): f.name for f in fields(cls)}

    def replace(self, **changes) -> "Hyperparams":
        return replace(self, **changes)
