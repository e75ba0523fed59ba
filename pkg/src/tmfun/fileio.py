"""On-disk formats: config text, interaction lists, binary features, graph caches, checkpoints, metric logs.

All binary formats are little-endian with a 4-byte magic. Writes go to a
temporary file in the target directory and are renamed into place.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .datamodel import Dataset, Hyperparams, ModelParams, RemappedPairs, SparseAdjacency
from .errors import FormatError, InvalidInput, IoError, ParseError
from .graph import GraphBundle, fuse_graphs

FEATURE_MAGIC = b"MMF1"
GRAPH_MAGIC = b"CSR1"
PARAMS_MAGIC = b"MMP1"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------- config


def parse_config(text: str) -> Hyperparams:
    keys = Hyperparams.config_keys()
    types = {f.name: f.type for f in fields(Hyperparams)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in keys:
            raise ParseError(f"unknown key {key!r}", lineno)
        name = keys[key]
        kind = types[name]
        try:
            if kind == "bool":
                low = value.lower()
                if low not in _TRUE | _FALSE:
                    raise ValueError(value)
                values[name] = low in _TRUE
            elif kind == "int":
                values[name] = int(value)
            elif kind == "float":
                values[name] = float(value)
            else:
                values[name] = value
        except ValueError:
            raise ParseError(f"bad value {value!r} for {key}", lineno) from None
    return Hyperparams(**values)


def load_config(path) -> Hyperparams:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text)


def dump_config(hp: Hyperparams) -> str:
    lines = []
    for key, name in Hyperparams.config_keys().items():
        value = getattr(hp, name)
        lines.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- interactions and splits


def load_interactions(path) -> list[tuple[str, str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(f"cannot read interactions {path}: {exc}") from exc
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) < 2:
            raise ParseError("expected '<user> <item>'", lineno)
        pairs.append((tokens[0], tokens[1]))
    return pairs


def split_dataset(remapped: RemappedPairs, rng: np.random.Generator, ratios=(0.8, 0.1, 0.1)) -> Dataset:
    """Per-user random split; duplicates collapse to their first occurrence.

    Users with fewer than three interactions go entirely to train; otherwise
    val and test each get ``max(1, floor(ratio * n))`` and train the rest.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not np.isclose(sum(ratios), 1.0):
        raise InvalidInput("ratios must be three non-negative numbers summing to 1")
    pairs = remapped.pairs
    n_users, n_items = len(remapped.user_tokens), len(remapped.item_tokens)
    _, first = np.unique(pairs[:, 0] * n_items + pairs[:, 1], return_index=True)
    pairs = pairs[np.sort(first)]
    order = np.argsort(pairs[:, 0], kind="stable")
    bounds = np.searchsorted(pairs[order, 0], np.arange(n_users + 1))
    out = {"train": [], "val": [], "test": []}
    for u in range(n_users):
        rows = pairs[order[bounds[u]:bounds[u + 1]]]
        n = len(rows)
        if n < 3:
            out["train"].append(rows)
            continue
        rows = rows[rng.permutation(n)]
        n_val = max(1, int(np.floor(ratios[1] * n)))
        n_test = max(1, int(np.floor(ratios[2] * n)))
        n_train = n - n_val - n_test
        out["train"].append(rows[:n_train])
        out["val"].append(rows[n_train:n_train + n_val])
        out["test"].append(rows[n_train + n_val:])
    merged = {k: np.concatenate(v) if v else np.zeros((0, 2), dtype=np.int64) for k, v in out.items()}
    return Dataset(n_users, n_items, merged["train"], merged["val"], merged["test"],
                   remapped.user_tokens, remapped.item_tokens)


def _pairs_text(pairs: np.ndarray) -> bytes:
    return "".join(f"{u} {i}\n" for u, i in pairs).encode()


def _read_pairs(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(_read_bytes(path).decode().splitlines(), start=1):
        if line.strip():
            try:
                u, i = line.split()
                rows.append((int(u), int(i)))
            except ValueError:
                raise FormatError(f"{path}: bad index pair on line {lineno}") from None
    return np.asarray(rows, dtype=np.int64).reshape(-1, 2)


def save_dataset(ds: Dataset, directory) -> None:
    d = Path(directory)
    atomic_write(d / "users.txt", "".join(f"{t}\n" for t in ds.user_tokens).encode())
    atomic_write(d / "items.txt", "".join(f"{t}\n" for t in ds.item_tokens).encode())
    for name in ("train", "val", "test"):
        atomic_write(d / f"{name}.txt", _pairs_text(ds.split(name)))


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    users = tuple(_read_bytes(d / "users.txt").decode().splitlines())
    items = tuple(_read_bytes(d / "items.txt").decode().splitlines())
    splits = {name: _read_pairs(d / f"{name}.txt") for name in ("train", "val", "test")}
    return Dataset(len(users), len(items), splits["train"], splits["val"], splits["test"], users, items)


# ---------------------------------------------------------------- features


def features_to_bytes(x: np.ndarray) -> bytes:
    x = np.asarray(x, dtype="<f4")
    if x.ndim != 2:
        raise InvalidInput("feature matrix must be 2-D")
    return FEATURE_MAGIC + struct.pack("<II", *x.shape) + np.ascontiguousarray(x).tobytes()


def features_from_bytes(data: bytes, source="<bytes>") -> np.ndarray:
    if len(data) < 12 or data[:4] != FEATURE_MAGIC:
        raise FormatError(f"{source}: not a feature file (bad magic)")
    n_rows, dim = struct.unpack_from("<II", data, 4)
    if len(data) != 12 + 4 * n_rows * dim:
        raise FormatError(f"{source}: expected {12 + 4 * n_rows * dim} bytes, found {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(n_rows, dim).astype(np.float32)


def write_features(path, x: np.ndarray) -> None:
    atomic_write(path, features_to_bytes(x))


def read_features(path) -> np.ndarray:
    """Binary MMF1 file, or whitespace-separated text rows for any other content."""
    data = _read_bytes(path)
    if data[:4] == FEATURE_MAGIC:
        return features_from_bytes(data, path)
    if str(path).endswith((".tsv", ".txt")):
        return _features_from_text(data, path)
    raise FormatError(f"{path}: not a feature file (bad magic)")


def _features_from_text(data: bytes, path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            rows.append([float(v) for v in line.split()])
        except ValueError:
            raise ParseError(f"{path}: non-numeric feature value", lineno) from None
        if len(rows[-1]) != len(rows[0]):
            raise ParseError(f"{path}: ragged feature row", lineno)
    if not rows:
        raise FormatError(f"{path}: no feature rows")
    return np.asarray(rows, dtype=np.float32)


# ---------------------------------------------------------------- graphs


def graph_to_bytes(g: SparseAdjacency) -> bytes:
    if g.n_rows != g.n_cols:
        raise InvalidInput("graph cache stores square graphs only")
    return b"".join([
        GRAPH_MAGIC,
        struct.pack("<IQ", g.n_rows, g.nnz),
        g.row_offsets.astype("<u8").tobytes(),
        g.col_indices.astype("<u4").tobytes(),
        g.weights.astype("<f4").tobytes(),
    ])


def graph_from_bytes(data: bytes, source="<bytes>") -> SparseAdjacency:
    if len(data) < 16 or data[:4] != GRAPH_MAGIC:
        raise FormatError(f"{source}: not a graph cache (bad magic)")
    n, nnz = struct.unpack_from("<IQ", data, 4)
    expected = 16 + 8 * (n + 1) + 8 * nnz
    if len(data) != expected:
        raise FormatError(f"{source}: expected {expected} bytes, found {len(data)}")
    pos = 16
    offsets = np.frombuffer(data, "<u8", n + 1, pos).astype(np.int64)
    pos += 8 * (n + 1)
    cols = np.frombuffer(data, "<u4", nnz, pos).astype(np.int64)
    weights = np.frombuffer(data, "<f4", nnz, pos + 4 * nnz).astype(np.float32)
    g = SparseAdjacency(n, n, offsets, cols, weights)
    try:
        g.check()
    except InvalidInput as exc:
        raise FormatError(f"{source}: {exc}") from None
    return g


def write_graph(path, g: SparseAdjacency) -> None:
    atomic_write(path, graph_to_bytes(g))


def read_graph(path) -> SparseAdjacency:
    return graph_from_bytes(_read_bytes(path), path)


def save_bundle(bundle: GraphBundle, directory) -> None:
    for name in ("g_visual", "g_textual", "g_item", "g_interaction"):
        write_graph(Path(directory) / f"{name}.csr", getattr(bundle, name))


def load_bundle(directory, lam: float | None = None) -> GraphBundle:
    """Load cached graphs; with ``lam`` the item graph is re-fused from the modality graphs."""
    d = Path(directory)
    gv, gt = read_graph(d / "g_visual.csr"), read_graph(d / "g_textual.csr")
    g_item = fuse_graphs(gv, gt, lam) if lam is not None else read_graph(d / "g_item.csr")
    return GraphBundle(gv, gt, g_item, read_graph(d / "g_interaction.csr"))


# ---------------------------------------------------------------- checkpoints and metrics


def params_to_bytes(params: ModelParams) -> bytes:
    itemsize = params.dtype.itemsize
    if itemsize not in (4, 8):
        raise InvalidInput("checkpoints hold float32 or float64 parameters")
    code = "<f4" if itemsize == 4 else "<f8"
    chunks = [PARAMS_MAGIC, struct.pack("<I", itemsize)]
    for arr in params.as_dict().values():
        chunks.append(struct.pack("<II", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=code).tobytes())
    return b"".join(chunks)


def params_from_bytes(data: bytes, source="<bytes>") -> ModelParams:
    if len(data) < 8 or data[:4] != PARAMS_MAGIC:
        raise FormatError(f"{source}: not a checkpoint (bad magic)")
    (itemsize,) = struct.unpack_from("<I", data, 4)
    if itemsize not in (4, 8):
        raise FormatError(f"{source}: unsupported element size {itemsize}")
    code = "<f4" if itemsize == 4 else "<f8"
    pos = 8
    tensors = {}
    for name in ModelParams.NAMES:
        if pos + 8 > len(data):
            raise FormatError(f"{source}: truncated checkpoint")
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        size = rows * cols * itemsize
        if pos + size > len(data):
            raise FormatError(f"{source}: truncated checkpoint")
        tensors[name] = np.frombuffer(data, code, rows * cols, pos).reshape(rows, cols).astype(code[1:])
        pos += size
    if pos != len(data):
        raise FormatError(f"{source}: trailing bytes in checkpoint")
    return ModelParams(**tensors)


def save_params(path, params: ModelParams) -> None:
    atomic_write(path, params_to_bytes(params))


def load_params(path) -> ModelParams:
    return params_from_bytes(_read_bytes(path), path)


def metrics_lines(records: Iterable[dict]) -> bytes:
    return "".join(json.dumps(r, sort_keys=False) + "\n" for r in records).encode()


def read_metrics(path) -> list[dict]:
    return [json.loads(line) for line in _read_bytes(path).decode().splitlines() if line.strip()]
