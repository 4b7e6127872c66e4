"""Rank-order tokenization of expression rows.

A row is encoded as the ids of its expressed genes sorted by normalized
expression (value divided by the corpus-wide nonzero median of that gene),
highest first, ties broken by ascending gene index, truncated to a maximum
length. Token ids 0 and 1 are reserved (PAD, MASK); gene g maps to g + 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StoreCorruptionError, ValidationError
from .store import RowSlice, SparseMatrixStore

PAD_ID = 0
MASK_ID = 1
TOKEN_OFFSET = 2

_STATS_JSON = "genestats.json"
_MEDIANS_BIN = "medians.bin"
_STATS_VERSION = 1


@dataclass(frozen=True)
class GeneStats:
    """Per-gene normalization statistics (nonzero medians)."""

    n_cols: int
    medians: np.ndarray

    def __post_init__(self):
        if len(self.medians) != self.n_cols:
            raise ValidationError("medians length does not match n_cols")
        if self.n_cols and float(np.min(self.medians)) <= 0.0:
            raise ValidationError("gene medians must be strictly positive")


@dataclass(frozen=True)
class TokenSequence:
    tokens: np.ndarray
    max_len: int

    def __len__(self) -> int:
        return len(self.tokens)


def compute_gene_stats(store: SparseMatrixStore) -> GeneStats:
    """Median of nonzero values per gene column; 1.0 for empty columns.

    Single pass over rows; per-gene accumulators hold only that gene's
    nonzero values.
    """
    per_gene: dict[int, list[float]] = {}
    for row in store.iter_rows():
        for c, v in zip(row.cols, row.vals):
            per_gene.setdefault(int(c), []).append(float(v))
    medians = np.ones(store.n_cols, dtype=np.float32)
    for g, vals in per_gene.items():
        medians[g] = np.median(np.array(vals, dtype=np.float64))
    return GeneStats(n_cols=store.n_cols, medians=medians)


def rank_encode(row: RowSlice, stats: GeneStats, max_len: int) -> TokenSequence:
    """Encode one row as a rank-order token sequence."""
    if max_len < 0:
        raise ValidationError("max_len must be >= 0")
    cols = np.asarray(row.cols, dtype=np.int64)
    if cols.size and cols.max() >= stats.n_cols:
        raise ValidationError("row column index exceeds stats.n_cols")
    scores = np.asarray(row.vals, dtype=np.float64) / np.asarray(
        stats.medians, dtype=np.float64
    )[cols] if cols.size else np.empty(0)
    # Stable sort on ascending gene index, then stable sort on descending
    # score, keeps the ascending-index tie rule.
    order = np.argsort(cols, kind="stable")
    order = order[np.argsort(-scores[order], kind="stable")]
    chosen = cols[order[:max_len]]
    return TokenSequence(tokens=(chosen + TOKEN_OFFSET).astype(np.int64), max_len=max_len)


def save_gene_stats(stats: GeneStats, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stats.medians.astype("<f4").tofile(directory / _MEDIANS_BIN)
    payload = {"version": _STATS_VERSION, "n_cols": stats.n_cols, "medians_file": _MEDIANS_BIN}
    with open(directory / _STATS_JSON, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_gene_stats(directory: str | Path) -> GeneStats:
    directory = Path(directory)
    with open(directory / _STATS_JSON, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != _STATS_VERSION:
        raise StoreCorruptionError(f"unsupported genestats version {payload.get('version')}")
    medians = np.fromfile(directory / payload["medians_file"], dtype="<f4")
    if len(medians) != payload["n_cols"]:
        raise StoreCorruptionError("medians sidecar length does not match n_cols")
    return GeneStats(n_cols=payload["n_cols"], medians=medians)


def gene_stats_available(directory: str | Path) -> bool:
    return (Path(directory) / _STATS_JSON).exists()
