"""Size-bucketed batch sampling with padding accounting.

Buckets are built by a greedy ascending sweep over the sorted unique
sample sizes. A bucket keeps accepting the next size while the resulting
interval stays within `max_width`, or unconditionally while it still has
fewer than `min_count` members (the minimum-count rule dominates the
width limit). Intervals are half-open `[lo, hi)` with `hi` set one past
the largest accepted size; the final bucket may end under-filled and is
flagged `tail_deficit`.

Batch emission shuffles each bucket's members (seeded), feeds every
bucket's order through the size-aware batcher independently, and
interleaves buckets by drawing the next batch from a bucket with
probability proportional to its remaining unemitted sample count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ValidationError
from .sizing import Batch, CostModel, SizeAwareBatcher

# Half-open interval padding above the largest member size.
_EPSILON = 1.0


@dataclass(frozen=True)
class Bucket:
    lo: float
    hi: float
    members: list[int]

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, size: float) -> bool:
        return self.lo <= size < self.hi


@dataclass(frozen=True)
class BucketSpec:
    buckets: list[Bucket]
    min_count: int
    max_width: float

    @property
    def tail_deficit(self) -> bool:
        return bool(self.buckets) and len(self.buckets[-1].members) < self.min_count

    def to_json(self) -> str:
        payload = {
            "boundaries": [[b.lo, b.hi] for b in self.buckets],
            "member_counts": [len(b.members) for b in self.buckets],
            "tail_deficit": self.tail_deficit,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def create_buckets(sizes: Sequence[float], max_width: float, min_count: int) -> BucketSpec:
    """Greedy ascending bucket construction over per-sample sizes."""
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.size == 0:
        raise ValidationError("sizes must be non-empty")
    if max_width <= 0:
        raise ValidationError("max_width must be > 0")
    if min_count < 1:
        raise ValidationError("min_count must be >= 1")

    unique = np.unique(sizes)
    by_size = {s: np.nonzero(sizes == s)[0].tolist() for s in unique}

    buckets: list[Bucket] = []
    lo = None
    last = None
    members: list[int] = []
    for s in unique:
        if lo is None:
            lo, last, members = s, s, list(by_size[s])
            continue
        if (s + _EPSILON - lo) <= max_width or len(members) < min_count:
            members.extend(by_size[s])
            last = s
        else:
            buckets.append(Bucket(lo=float(lo), hi=float(last + _EPSILON), members=members))
            lo, last, members = s, s, list(by_size[s])
    buckets.append(Bucket(lo=float(lo), hi=float(last + _EPSILON), members=members))
    return BucketSpec(buckets=buckets, min_count=min_count, max_width=float(max_width))


def padding_elements(batch: Batch, shapes: Callable[[int], dict[str, tuple[int, ...]]]) -> int:
    """Padded-minus-actual element count when collating a batch.

    Every named tensor is padded per-dimension to the batch maximum; the
    result sums over tensors.
    """
    per_sample = [shapes(i) for i in batch.indices]
    names = set(per_sample[0])
    for shp in per_sample[1:]:
        if set(shp) != names:
            raise ValidationError("inconsistent tensor names across batch samples")
    total = 0
    for name in sorted(names):
        dims = [shp[name] for shp in per_sample]
        arity = len(dims[0])
        if any(len(d) != arity for d in dims):
            raise ValidationError(f"inconsistent arity for tensor {name!r} across batch samples")
        maxes = [max(d[k] for d in dims) for k in range(arity)]
        padded = len(dims) * int(np.prod(maxes, dtype=np.int64)) if arity else len(dims)
        actual = sum(int(np.prod(d, dtype=np.int64)) if arity else 1 for d in dims)
        total += padded - actual
    return total


class BucketBatchIterator:
    """One epoch of bucket-pure, budget-constrained batches.

    Single-consumer; `skipped` fills as iteration proceeds.
    """

    def __init__(
        self,
        spec: BucketSpec,
        features,
        model: CostModel,
        budget: float,
        seed: int,
        shapes: Callable[[int], dict[str, tuple[int, ...]]] | None = None,
    ):
        if budget <= 0:
            raise ValidationError("budget must be > 0")
        self.spec = spec
        self.features = features
        self.model = model
        self.budget = float(budget)
        self.seed = seed
        self.shapes = shapes
        self.skipped: list[int] = []

    def __iter__(self) -> Iterator[Batch]:
        rng = np.random.default_rng(self.seed)
        orders = [rng.permutation(np.asarray(b.members, dtype=np.int64)).tolist()
                  for b in self.spec.buckets]
        # Oversized members are known up front; remaining counts track only
        # samples that will actually be emitted.
        remaining = np.zeros(len(orders), dtype=np.int64)
        batchers: list[SizeAwareBatcher] = []
        iterators: list[Iterator[Batch]] = []
        for b, order in enumerate(orders):
            n_over = sum(1 for i in order if self.model.predict(self.features[i]) > self.budget)
            remaining[b] = len(order) - n_over
            batcher = SizeAwareBatcher(order, self.model, self.features, self.budget)
            batchers.append(batcher)
            iterators.append(iter(batcher))

        while remaining.sum() > 0:
            pick = int(rng.integers(int(remaining.sum())))
            b = int(np.searchsorted(np.cumsum(remaining), pick, side="right"))
            batch = next(iterators[b])
            remaining[b] -= len(batch.indices)
            if self.shapes is not None:
                batch.padding_elements = padding_elements(batch, self.shapes)
            yield batch
        # Drain so every batcher records skips past its last emitted batch.
        for it in iterators:
            for _ in it:
                pass
        self.skipped = [i for batcher in batchers for i in batcher.skipped]


def bucket_batches(
    spec: BucketSpec,
    features,
    model: CostModel,
    budget: float,
    seed: int,
    shapes: Callable[[int], dict[str, tuple[int, ...]]] | None = None,
) -> BucketBatchIterator:
    """One-epoch iterator of batches drawn within single buckets."""
    return BucketBatchIterator(spec, features, model, budget, seed, shapes)
