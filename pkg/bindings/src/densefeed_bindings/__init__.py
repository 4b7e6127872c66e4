"""Dataset-style bindings over the densefeed toolkit.

A zero-logic marshaling layer: every operation delegates to the native
library, so tokens, metadata values, and batch sequences are identical
to what the native API and CLI produce. Exposes :func:`open`,
:func:`batches`, and the native :func:`rank_encode`.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterator

import numpy as np

import densefeed
from densefeed import GeneStats, SparseMatrixStore, rank_encode
from densefeed.tokenizer import (
    compute_gene_stats,
    gene_stats_available,
    load_gene_stats,
)

__version__ = densefeed.__version__

__all__ = ["BoundDataset", "open", "batches", "rank_encode", "__version__"]


class BoundDataset:
    """Random-access view of an open store as (tokens, metadata) items.

    Length equals the store's row count. Safe to share across reader
    threads; batch iterables obtained from :func:`batches` are
    single-consumer.
    """

    def __init__(self, store: SparseMatrixStore, stats: GeneStats, max_len: int):
        self.store = store
        self.stats = stats
        self.max_len = max_len

    def __len__(self) -> int:
        return self.store.n_rows

    def __getitem__(self, index: int) -> tuple[list[int], dict]:
        row = self.store.get_row(index)
        tokens = rank_encode(row, self.stats, self.max_len).tokens
        metadata = {name: self.store.get_metadata(name, index)
                    for name in self.store.metadata_columns}
        return list(tokens), metadata

    def __iter__(self) -> Iterator[tuple[list[int], dict]]:
        for index in range(len(self)):
            yield self[index]

    def sizes(self) -> np.ndarray:
        """Per-row nonzero counts, the store's native notion of sample size."""
        rp = np.asarray(self.store.row_ptr, dtype=np.int64)
        return np.diff(rp)


def open(directory: str | Path, max_len: int = 2048) -> BoundDataset:
    """Open a store directory as a dataset.

    Persisted gene statistics are used when present in the directory;
    otherwise they are computed from the store, matching the native CLI.
    """
    store = densefeed.open_store(directory)
    if gene_stats_available(directory):
        stats = load_gene_stats(directory)
    else:
        stats = compute_gene_stats(store)
    return BoundDataset(store, stats, max_len)


def batches(
    dataset: BoundDataset,
    costmodel_path: str | Path,
    budget: float,
    max_width: float,
    min_count: int,
    seed: int,
) -> Iterator[list[int]]:
    """Yield the native bucketed batch sequence as plain index lists.

    Sample size (row nonzero count) is the single cost-model feature.
    Parameter validation and batch order are exactly the native
    implementation's for the same seed.
    """
    model = densefeed.load_cost_model(costmodel_path)
    sizes = dataset.sizes()
    spec = densefeed.create_buckets(sizes.tolist(), max_width, min_count)
    features = sizes.reshape(-1, 1).astype(np.float64)
    for batch in densefeed.bucket_batches(spec, features, model, budget, seed):
        yield list(batch.indices)
