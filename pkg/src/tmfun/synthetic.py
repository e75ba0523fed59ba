"""Synthetic block-structured interactions with matching modality features.

Items and users are split into latent blocks. Each user draws most of its
items from its own block. Inside a block the choice follows item popularity
and the match between a user taste vector and an item latent factor. Item
features are the block centroid plus a modality-specific linear image of
the item factor plus Gaussian noise, so features reveal both the block and
part of the within-block preference structure.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datamodel import Dataset, remap_ids
from .fileio import split_dataset


@dataclass(frozen=True, eq=False)
class SyntheticData:
    dataset: Dataset
    visual: np.ndarray
    textual: np.ndarray
    item_block: np.ndarray
    user_block: np.ndarray
    raw_pairs: list


def make_block_data(
    n_users: int = 400,
    n_items: int = 300,
    n_blocks: int = 2,
    in_block_rate: float = 0.9,
    min_items: int = 5,
    max_items: int = 10,
    popularity_exponent: float = 0.5,
    taste_dim: int = 4,
    taste_strength: float = 2.0,
    dim_v: int = 32,
    dim_t: int = 24,
    noise: float = 1.0,
    seed: int = 0,
) -> SyntheticData:
    rng = np.random.default_rng(seed)
    item_block = np.arange(n_items) % n_blocks
    user_block = rng.integers(0, n_blocks, size=n_users)
    # popularity rank is a random permutation inside each block
    popularity = np.empty(n_items)
    for b in range(n_blocks):
        members = np.flatnonzero(item_block == b)
        ranks = rng.permutation(len(members)) + 1
        popularity[members] = ranks ** -popularity_exponent

    item_factor = rng.normal(size=(n_items, taste_dim))
    user_taste = rng.normal(size=(n_users, taste_dim)) / np.sqrt(max(taste_dim, 1))

    raw = []
    for u in range(n_users):
        count = int(rng.integers(min_items, max_items + 1))
        home = item_block == user_block[u]
        n_home = min(int(rng.binomial(count, in_block_rate)), int(home.sum()))
        n_away = min(count - n_home, int((~home).sum()))
        chosen = []
        for mask, n in ((home, n_home), (~home, n_away)):
            members = np.flatnonzero(mask)
            logit = taste_strength * (item_factor[members] @ user_taste[u])
            p = popularity[members] * np.exp(logit - logit.max())
            p /= p.sum()
            chosen.extend(rng.choice(members, size=n, replace=False, p=p))
        for i in chosen:
            raw.append((f"u{u}", f"i{i}"))

    def features(dim):
        centroids = rng.normal(size=(n_blocks, dim))
        mixing = rng.normal(size=(taste_dim, dim))
        signal = centroids[item_block] + item_factor @ mixing
        return (signal + noise * rng.normal(size=(n_items, dim))).astype(np.float32)

    visual, textual = features(dim_v), features(dim_t)
    remapped = remap_ids(raw)
    ds = split_dataset(remapped, rng)
    # reorder feature rows to the remapped (first-seen) item order
    item_ids = np.array([int(t[1:]) for t in remapped.item_tokens])
    user_ids = np.array([int(t[1:]) for t in remapped.user_tokens])
    return SyntheticData(ds, visual[item_ids], textual[item_ids], item_block[item_ids], user_block[user_ids], raw)


def write_text_files(data: SyntheticData, directory) -> dict[str, Path]:
    """Write interactions.txt, visual.tsv and textual.tsv in the CLI input formats."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {name: directory / name for name in ("interactions.txt", "visual.tsv", "textual.tsv")}
    lines = "".join(f"{u}\t{i}\n" for u, i in data.raw_pairs)
    paths["interactions.txt"].write_text(lines, encoding="utf-8")
    for name, x in (("visual.tsv", data.visual), ("textual.tsv", data.textual)):
        rows = "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in x)
        paths[name].write_text(rows, encoding="utf-8")
    return paths
