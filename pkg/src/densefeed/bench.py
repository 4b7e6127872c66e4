"""Batching-strategy benchmark harness.

Three strategies run over the same synthetic corpus and budget:

* static    — shuffled order chunked into fixed-cardinality batches; any
              batch over budget is discarded whole (the OOM-abort baseline).
* adaptive  — samples grouped into coarse size bins; per-bin cardinality is
              budget / predicted cost at the bin maximum; bins drawn with
              probability proportional to bin population (frequency-biased
              baseline; not sample-conserving).
* bucketed  — create_buckets + bucket_batches composition.

Each run reports the emitted-size histogram, per-batch padding, and skip
counts; `compare_strategies` adds total-variation distances against the
corpus size distribution. Reports are seed-deterministic; wall-clock
timings are kept out of the deterministic payload.
"""

from __future__ import annotations

import json
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .bucketing import bucket_batches, create_buckets, padding_elements
from .corpus import SyntheticCorpus
from .errors import ValidationError
from .sizing import Batch, CostModel
from .store import open_store


@dataclass
class BatchStat:
    padding: int
    cardinality: int
    max_size: int


@dataclass
class StrategyReport:
    strategy: str
    epochs: int
    n_samples: int
    size_histogram: dict[int, int]
    batch_stats: list[BatchStat]
    skipped: int
    sample_conserving: bool
    elapsed: float

    @property
    def batches_emitted(self) -> int:
        return len(self.batch_stats)

    @property
    def emitted_samples(self) -> int:
        return sum(self.size_histogram.values())

    @property
    def per_batch_padding(self) -> list[int]:
        return [b.padding for b in self.batch_stats]

    @property
    def median_padding(self) -> float:
        if not self.batch_stats:
            return 0.0
        return float(np.median(self.per_batch_padding))

    def deterministic_payload(self) -> dict:
        return {
            "strategy": self.strategy,
            "epochs": self.epochs,
            "n_samples": self.n_samples,
            "size_histogram": {str(k): int(v) for k, v in sorted(self.size_histogram.items())},
            "batches_emitted": self.batches_emitted,
            "emitted_samples": self.emitted_samples,
            "skipped": self.skipped,
            "sample_conserving": self.sample_conserving,
            "median_padding": self.median_padding,
        }


def _epoch_seeds(seed: int, epochs: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(child.generate_state(1)[0]) for child in ss.spawn(max(epochs, 1))][:epochs]


def _record_batch(report: StrategyReport, corpus: SyntheticCorpus, batch: Batch) -> None:
    sizes = [int(corpus.sizes[i]) for i in batch.indices]
    for s in sizes:
        report.size_histogram[s] = report.size_histogram.get(s, 0) + 1
    pad = batch.padding_elements
    if pad is None:
        pad = padding_elements(batch, corpus.shapes)
    report.batch_stats.append(BatchStat(padding=pad, cardinality=len(sizes), max_size=max(sizes)))


def run_static(
    corpus: SyntheticCorpus,
    batch_size: int,
    model: CostModel,
    budget: float,
    epochs: int = 10,
    seed: int = 0,
) -> StrategyReport:
    """Fixed-cardinality batching; over-budget batches discarded whole."""
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    t0 = time.perf_counter()
    report = StrategyReport("static", epochs, corpus.n_samples, {}, [], 0, True, 0.0)
    costs = model.predict_many(corpus.features)
    for epoch_seed in _epoch_seeds(seed, epochs):
        rng = np.random.default_rng(epoch_seed)
        order = rng.permutation(corpus.n_samples)
        for start in range(0, corpus.n_samples, batch_size):
            chunk = order[start : start + batch_size]
            total = float(costs[chunk].sum())
            if total > budget:
                report.skipped += len(chunk)
                continue
            _record_batch(report, corpus, Batch(indices=chunk.tolist(), predicted_cost=total))
    report.elapsed = time.perf_counter() - t0
    return report


def run_adaptive(
    corpus: SyntheticCorpus,
    model: CostModel,
    budget: float,
    epochs: int = 10,
    seed: int = 0,
    bin_width: int | None = None,
) -> StrategyReport:
    """Size-group adaptive cardinality with frequency-proportional group draws.

    Groups are coarse size bins; batch cardinality for a bin is derived
    from the predicted cost at the bin's largest size. Draws are with
    replacement, so the strategy is not sample-conserving; it stops once
    it has emitted `epochs` x (live samples).
    """
    t0 = time.perf_counter()
    sizes = corpus.sizes
    if bin_width is None:
        bin_width = max(1, int(round((int(sizes.max()) - int(sizes.min()) + 1) / 12)))
    report = StrategyReport("adaptive", epochs, corpus.n_samples, {}, [], 0, False, 0.0)

    bin_ids = (sizes - int(sizes.min())) // bin_width
    bins: dict[int, np.ndarray] = {
        int(b): np.nonzero(bin_ids == b)[0] for b in np.unique(bin_ids)
    }
    live_bins = []
    for b, members in sorted(bins.items()):
        bin_max = int(sizes[members].max())
        cost = model.predict(corpus.features_for_size(bin_max))
        if cost > budget:
            report.skipped += len(members) * epochs
            continue
        cardinality = max(1, int(budget // cost))
        live_bins.append((members, cardinality))
    n_live = sum(len(m) for m, _ in live_bins)
    target = epochs * n_live
    if n_live == 0 or target == 0:
        report.elapsed = time.perf_counter() - t0
        return report

    rng = np.random.default_rng(seed)
    weights = np.array([len(m) for m, _ in live_bins], dtype=np.float64)
    weights /= weights.sum()
    emitted = 0
    costs = model.predict_many(corpus.features)
    while emitted < target:
        b = int(rng.choice(len(live_bins), p=weights))
        members, cardinality = live_bins[b]
        take = min(cardinality, len(members))
        chosen = rng.choice(members, size=take, replace=False)
        batch = Batch(indices=chosen.tolist(), predicted_cost=float(costs[chosen].sum()))
        _record_batch(report, corpus, batch)
        emitted += take
    report.elapsed = time.perf_counter() - t0
    return report


def run_bucketed(
    corpus: SyntheticCorpus,
    model: CostModel,
    budget: float,
    max_width: float,
    min_count: int,
    epochs: int = 10,
    seed: int = 0,
) -> StrategyReport:
    """create_buckets + bucket_batches composition."""
    t0 = time.perf_counter()
    report = StrategyReport("bucketed", epochs, corpus.n_samples, {}, [], 0, True, 0.0)
    spec = create_buckets(corpus.sizes, max_width, min_count)
    for epoch_seed in _epoch_seeds(seed, epochs):
        it = bucket_batches(spec, corpus.features, model, budget, seed=epoch_seed,
                            shapes=corpus.shapes)
        for batch in it:
            _record_batch(report, corpus, batch)
        report.skipped += len(it.skipped)
    report.elapsed = time.perf_counter() - t0
    return report


def tv_distance(hist_a: dict[int, int], hist_b: dict[int, int]) -> float:
    """Total-variation distance between two (unnormalized) histograms."""
    total_a = sum(hist_a.values())
    total_b = sum(hist_b.values())
    if total_a == 0 or total_b == 0:
        return 1.0
    support = set(hist_a) | set(hist_b)
    return 0.5 * sum(
        abs(hist_a.get(s, 0) / total_a - hist_b.get(s, 0) / total_b) for s in support
    )


def corpus_histogram(corpus: SyntheticCorpus) -> dict[int, int]:
    hist: dict[int, int] = {}
    for s in corpus.sizes:
        hist[int(s)] = hist.get(int(s), 0) + 1
    return hist


def compare_strategies(
    corpus: SyntheticCorpus,
    model: CostModel,
    budget: float,
    max_width: float,
    min_count: int,
    epochs: int = 10,
    seed: int = 0,
    static_batch_size: int | None = None,
    adaptive_bin_width: int | None = None,
) -> dict:
    """Run all three strategies and derive the comparison metrics."""
    costs = model.predict_many(corpus.features)
    if static_batch_size is None:
        static_batch_size = max(1, int(budget // float(costs.mean())))
    reports = {
        "static": run_static(corpus, static_batch_size, model, budget, epochs, seed),
        "adaptive": run_adaptive(corpus, model, budget, epochs, seed, adaptive_bin_width),
        "bucketed": run_bucketed(corpus, model, budget, max_width, min_count, epochs, seed),
    }
    corpus_hist = corpus_histogram(corpus)
    metrics = {
        "static_batch_size": static_batch_size,
        "tv": {name: tv_distance(r.size_histogram, corpus_hist) for name, r in reports.items()},
        "median_padding": {name: r.median_padding for name, r in reports.items()},
        "skipped": {name: r.skipped for name, r in reports.items()},
    }
    return {"reports": reports, "metrics": metrics, "corpus_histogram": corpus_hist}


def write_reports(result: dict, out_dir: str | Path, gnuplot: bool = False) -> None:
    """Write deterministic JSON/CSV reports (timings kept separate)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    for name, report in result["reports"].items():
        with open(out / f"{name}.json", "w", encoding="utf-8") as fh:
            json.dump(report.deterministic_payload(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / f"{name}_padding.csv", "w", encoding="utf-8") as fh:
            fh.write("batch_id,padding_elements,batch_cardinality,max_size\n")
            for i, stat in enumerate(report.batch_stats):
                fh.write(f"{i},{stat.padding},{stat.cardinality},{stat.max_size}\n")
        timings[name] = report.elapsed
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(result["metrics"], fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "timings.json", "w", encoding="utf-8") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if gnuplot:
        _write_gnuplot_columns(result, out)


def _write_gnuplot_columns(result: dict, out: Path) -> None:
    corpus_hist = result["corpus_histogram"]
    names = list(result["reports"])
    support = sorted(set(corpus_hist) | {s for r in result["reports"].values()
                                         for s in r.size_histogram})
    totals = {name: max(1, result["reports"][name].emitted_samples) for name in names}
    corpus_total = max(1, sum(corpus_hist.values()))
    with open(out / "sizes.dat", "w", encoding="utf-8") as fh:
        fh.write("# size corpus " + " ".join(names) + "\n")
        for s in support:
            row = [f"{s}", f"{corpus_hist.get(s, 0) / corpus_total:.6g}"]
            for name in names:
                row.append(f"{result['reports'][name].size_histogram.get(s, 0) / totals[name]:.6g}")
            fh.write(" ".join(row) + "\n")
    with open(out / "padding.dat", "w", encoding="utf-8") as fh:
        fh.write("# strategy median_padding\n")
        for name in names:
            fh.write(f"{name} {result['reports'][name].median_padding:.6g}\n")


@dataclass
class IterationReport:
    n_rows: int
    epochs: int
    per_epoch_seconds: list[float]
    rows_per_second: float
    checksum: str


def bench_iterate(store_dir: str | Path, epochs: int) -> IterationReport:
    """Time full row-by-row iteration over a store; checksum verifies reads."""
    store = open_store(store_dir)
    per_epoch: list[float] = []
    checksum = 0
    for _ in range(epochs):
        t0 = time.perf_counter()
        crc = 0
        for row in store.iter_rows():
            crc = zlib.crc32(np.ascontiguousarray(row.cols).tobytes(), crc)
            crc = zlib.crc32(np.ascontiguousarray(row.vals).tobytes(), crc)
        per_epoch.append(time.perf_counter() - t0)
        checksum = crc
    total = sum(per_epoch)
    rows_per_second = (store.n_rows * epochs / total) if total > 0 else 0.0
    return IterationReport(
        n_rows=store.n_rows,
        epochs=epochs,
        per_epoch_seconds=per_epoch,
        rows_per_second=rows_per_second,
        checksum=f"{checksum:08x}" if epochs else "",
    )
