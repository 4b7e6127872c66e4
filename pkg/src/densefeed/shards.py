"""Sharded tar dataset writing and streaming.

Shards are plain uncompressed POSIX ustar archives named
``shard-NNNNNN.tar``. An entry ``<key>.<ext>`` contributes the payload for
extension ``ext`` of sample ``key``; all entries of one sample are stored
contiguously, and keys are unique across the shard set. ``manifest.json``
records the total and per-shard sample counts.
"""

from __future__ import annotations

import io
import json
import tarfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ShardFormatError, StageError, StorageError, ValidationError

MANIFEST = "manifest.json"
_MANIFEST_VERSION = 1
_SHARD_FMT = "shard-%06d.tar"


@dataclass(frozen=True)
class Sample:
    """One dataset sample: a key plus named byte payloads."""

    key: str
    parts: dict[str, bytes]

    def validate(self) -> None:
        if not self.key or "." in self.key:
            raise ValidationError(f"sample key {self.key!r} must be non-empty and contain no '.'")
        if not self.parts:
            raise ValidationError(f"sample {self.key!r} has no parts")


@dataclass(frozen=True)
class ShardSet:
    root: Path
    shard_paths: list[Path]
    samples_per_shard: int
    shard_counts: list[int]

    @property
    def total_samples(self) -> int:
        return sum(self.shard_counts)

    def subset(self, worker: int, num_workers: int) -> "ShardSet":
        """Round-robin shard split for parallel workers."""
        paths = self.shard_paths[worker::num_workers]
        counts = self.shard_counts[worker::num_workers]
        return ShardSet(self.root, paths, self.samples_per_shard, counts)


def write_shards(samples: Iterable[Sample], out_dir: str | Path, max_per_shard: int) -> ShardSet:
    """Write samples into tar shards of at most `max_per_shard` samples each."""
    if max_per_shard < 1:
        raise ValidationError("max_per_shard must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    seen: set[str] = set()
    shard_paths: list[Path] = []
    shard_counts: list[int] = []
    writer: tarfile.TarFile | None = None
    in_shard = 0

    def open_next() -> tarfile.TarFile:
        path = out / (_SHARD_FMT % len(shard_paths))
        shard_paths.append(path)
        shard_counts.append(0)
        return tarfile.open(path, "w", format=tarfile.USTAR_FORMAT)

    try:
        for sample in samples:
            sample.validate()
            if sample.key in seen:
                raise ValidationError(f"duplicate sample key {sample.key!r}")
            seen.add(sample.key)
            if writer is None or in_shard == max_per_shard:
                if writer is not None:
                    writer.close()
                writer = open_next()
                in_shard = 0
            for ext in sorted(sample.parts):
                payload = sample.parts[ext]
                info = tarfile.TarInfo(name=f"{sample.key}.{ext}")
                info.size = len(payload)
                writer.addfile(info, io.BytesIO(payload))
            in_shard += 1
            shard_counts[-1] += 1
    finally:
        if writer is not None:
            writer.close()

    manifest = {
        "version": _MANIFEST_VERSION,
        "total_samples": sum(shard_counts),
        "samples_per_shard": max_per_shard,
        "shards": [
            {"path": p.name, "count": c} for p, c in zip(shard_paths, shard_counts)
        ],
    }
    with open(out / MANIFEST, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return ShardSet(out, shard_paths, max_per_shard, shard_counts)


def load_shard_set(directory: str | Path) -> ShardSet:
    directory = Path(directory)
    try:
        with open(directory / MANIFEST, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise StorageError(f"missing {directory / MANIFEST}") from None
    if manifest.get("version") != _MANIFEST_VERSION:
        raise StorageError(f"unsupported manifest version {manifest.get('version')}")
    paths = [directory / s["path"] for s in manifest["shards"]]
    counts = [int(s["count"]) for s in manifest["shards"]]
    return ShardSet(directory, paths, int(manifest.get("samples_per_shard", 0)), counts)


def _scan_shard(path: Path, seen_keys: set[str]) -> Iterator[Sample]:
    """Group a shard's contiguous same-key entries into samples."""
    if not path.exists():
        raise StorageError(f"missing shard {path}")
    closed_in_shard: set[str] = set()
    current_key: str | None = None
    parts: dict[str, bytes] = {}
    with tarfile.open(path, "r") as tar:
        for member in tar:
            if not member.isfile():
                continue
            name = member.name
            if "." not in name:
                raise ShardFormatError(f"{path.name}: entry {name!r} has no extension")
            key, ext = name.split(".", 1)
            if key != current_key:
                if current_key is not None:
                    yield Sample(current_key, parts)
                    closed_in_shard.add(current_key)
                if key in closed_in_shard:
                    raise ShardFormatError(
                        f"{path.name}: entries for key {key!r} are not contiguous"
                    )
                if key in seen_keys:
                    raise ShardFormatError(f"duplicate key {key!r} across shards")
                seen_keys.add(key)
                current_key, parts = key, {}
            parts[ext] = tar.extractfile(member).read()
    if current_key is not None:
        yield Sample(current_key, parts)


def stream_samples(shard_set: ShardSet, shuffle_buffer: int = 0, seed: int = 0) -> Iterator[Sample]:
    """Stream samples from a shard set, optionally shuffled.

    With ``shuffle_buffer = B > 0``, a reservoir of B samples is kept; as
    each new sample arrives, a uniformly random buffered sample is emitted
    and replaced. Deterministic under `seed`; every sample is emitted
    exactly once per pass.
    """
    if shuffle_buffer < 0:
        raise ValidationError("shuffle_buffer must be >= 0")

    def ordered() -> Iterator[Sample]:
        seen: set[str] = set()
        for path in shard_set.shard_paths:
            yield from _scan_shard(path, seen)

    if shuffle_buffer == 0:
        yield from ordered()
        return

    rng = np.random.default_rng(seed)
    buffer: list[Sample] = []
    for sample in ordered():
        if len(buffer) < shuffle_buffer:
            buffer.append(sample)
            continue
        j = int(rng.integers(shuffle_buffer))
        out, buffer[j] = buffer[j], sample
        yield out
    while buffer:
        j = int(rng.integers(len(buffer)))
        yield buffer.pop(j)


class _Stage:
    def apply(self, upstream: Iterator, index: int) -> Iterator:
        raise NotImplementedError


def _key_of(item) -> str | None:
    return item.key if isinstance(item, Sample) else None


class _MapStage(_Stage):
    def __init__(self, fn: Callable):
        self.fn = fn

    def apply(self, upstream, index):
        for item in upstream:
            try:
                yield self.fn(item)
            except Exception as exc:
                raise StageError(index, _key_of(item), exc) from exc


class _FilterStage(_Stage):
    def __init__(self, pred: Callable):
        self.pred = pred

    def apply(self, upstream, index):
        for item in upstream:
            try:
                keep = self.pred(item)
            except Exception as exc:
                raise StageError(index, _key_of(item), exc) from exc
            if keep:
                yield item


class _BatchStage(_Stage):
    def __init__(self, size: int, collate: Callable | None = None):
        if size < 1:
            raise ValidationError("batch stage size must be >= 1")
        self.size = size
        self.collate = collate

    def _emit(self, window, index):
        if self.collate is None:
            return list(window)
        try:
            return self.collate(list(window))
        except Exception as exc:
            raise StageError(index, _key_of(window[0]), exc) from exc

    def apply(self, upstream, index):
        window: list = []
        for item in upstream:
            window.append(item)
            if len(window) == self.size:
                yield self._emit(window, index)
                window = []
        if window:
            yield self._emit(window, index)


def map_stage(fn: Callable) -> _Stage:
    """Per-sample transformation stage."""
    return _MapStage(fn)


def filter_stage(pred: Callable) -> _Stage:
    """Keep only samples satisfying `pred`."""
    return _FilterStage(pred)


def batch_stage(size: int, collate: Callable | None = None) -> _Stage:
    """Window the stream into lists of `size` (final window may be short)."""
    return _BatchStage(size, collate)


def compose(source: Iterable, stages: Sequence[_Stage]) -> Iterator:
    """Chain stages over a sample iterator, lazily, in declared order."""
    it: Iterator = iter(source)
    for index, stage in enumerate(stages):
        it = stage.apply(it, index)
    return it
