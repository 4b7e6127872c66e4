"""Synthetic variably-sized corpora for batching benchmarks.

Sample sizes are drawn from a clipped lognormal (right-skewed, like
molecule-size distributions) or taken from an empirical size file. A shape
template maps a sample's size n to its named tensor dimensions, by default
a node-feature tensor (n, width) and optionally an (n, n) adjacency.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .sizing import CostModel

CONFIG_VERSION = 1


@dataclass(frozen=True)
class CorpusConfig:
    n_samples: int
    distribution: str = "lognormal"  # or "empirical"
    lognormal_mu: float = 3.4
    lognormal_sigma: float = 0.6
    clip_min: int = 4
    clip_max: int = 150
    node_width: int = 16
    adjacency: bool = True
    sizes_file: str | None = None  # for distribution == "empirical"

    def to_json(self) -> str:
        payload = {"version": CONFIG_VERSION, **self.__dict__}
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json_file(path: str | Path) -> "CorpusConfig":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.pop("version", None)
        if version != CONFIG_VERSION:
            raise ValidationError(f"unsupported corpus config version {version}")
        return CorpusConfig(**payload)


class SyntheticCorpus:
    """Materialized corpus: per-sample sizes plus feature/shape accessors."""

    def __init__(self, config: CorpusConfig, sizes: np.ndarray, seed: int):
        self.config = config
        self.sizes = sizes
        self.seed = seed
        self.n_samples = len(sizes)
        if config.adjacency:
            self.features = np.stack([sizes, sizes.astype(np.int64) ** 2], axis=1).astype(np.float64)
        else:
            self.features = sizes[:, None].astype(np.float64)

    def shapes(self, i: int) -> dict[str, tuple[int, ...]]:
        n = int(self.sizes[i])
        shapes = {"node": (n, self.config.node_width)}
        if self.config.adjacency:
            shapes["adj"] = (n, n)
        return shapes

    def features_for_size(self, n: int) -> np.ndarray:
        if self.config.adjacency:
            return np.array([n, n * n], dtype=np.float64)
        return np.array([n], dtype=np.float64)

    def exact_cost_model(self) -> CostModel:
        """Cost = total collated elements for one sample (node + adjacency)."""
        if self.config.adjacency:
            weights = np.array([self.config.node_width, 1.0])
        else:
            weights = np.array([float(self.config.node_width)])
        return CostModel(weights=weights, intercept=0.0, safety_margin=1.0)


def generate_corpus(config: CorpusConfig, seed: int) -> SyntheticCorpus:
    """Deterministically draw a corpus from its config and seed."""
    if config.n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    if config.clip_min < 1 or config.clip_max < config.clip_min:
        raise ValidationError("require 1 <= clip_min <= clip_max")
    if config.distribution == "lognormal":
        rng = np.random.default_rng(seed)
        raw = rng.lognormal(config.lognormal_mu, config.lognormal_sigma, size=config.n_samples)
        sizes = np.clip(np.rint(raw), config.clip_min, config.clip_max).astype(np.int64)
    elif config.distribution == "empirical":
        if not config.sizes_file:
            raise ValidationError("empirical distribution requires sizes_file")
        sizes = np.loadtxt(config.sizes_file, dtype=np.int64, ndmin=1)
        if len(sizes) != config.n_samples:
            raise ValidationError("sizes_file length does not match n_samples")
        if sizes.min() < config.clip_min or sizes.max() > config.clip_max:
            raise ValidationError("empirical sizes fall outside the configured clip range")
    else:
        raise ValidationError(f"unknown distribution {config.distribution!r}")
    return SyntheticCorpus(config, sizes, seed)
