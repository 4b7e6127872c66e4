"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 I/O or corruption error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import bench as bench_mod
from . import shards as shards_mod
from .corpus import CorpusConfig, generate_corpus
from .errors import StorageError, ValidationError
from .store import build_store, open_store
from .tokenizer import (
    compute_gene_stats,
    gene_stats_available,
    load_gene_stats,
    rank_encode,
)

EXIT_VALIDATION = 2
EXIT_STORAGE = 3


def _tool_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (StorageError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_STORAGE)

    return wrapper


@click.group()
def main():
    """Data-loading toolkit for variably-sized samples."""


@main.command()
@click.argument("mtx", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path())
@click.option("--meta", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Tab-separated per-row metadata table with a header row.")
@click.option("--overwrite", is_flag=True, help="Allow writing into a non-empty directory.")
@_tool_errors
def convert(mtx, out, meta, overwrite):
    """Convert a coordinate-format matrix file into a store directory."""
    report = build_store(mtx, out, metadata_path=meta, overwrite=overwrite)
    click.echo(
        f"rows={report.rows_in} entries={report.entries_in} "
        f"duplicates_merged={report.duplicates_merged} zeros_dropped={report.zeros_dropped} "
        f"elapsed={report.elapsed:.3f}s"
    )


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--deep", is_flag=True, help="Full structural scan instead of O(1) checks.")
@click.option("--row", type=int, default=None, help="Print one row's columns and values.")
@click.option("--tokens", is_flag=True, help="With --row: print the rank-order token ids.")
@click.option("--max-len", type=int, default=2048, show_default=True,
              help="Token sequence truncation length.")
@_tool_errors
def inspect(store_dir, deep, row, tokens, max_len):
    """Show store summary, validate, or dump a row."""
    store = open_store(store_dir)
    if deep:
        store.deep_validate()
        click.echo("deep validation ok")
    if row is None:
        meta = ",".join(f"{n}:{t}" for n, t in store.metadata_columns.items()) or "-"
        click.echo(f"n_rows={store.n_rows} n_cols={store.n_cols} nnz={store.nnz} metadata={meta}")
        return
    row_slice = store.get_row(row)
    if tokens:
        if gene_stats_available(store_dir):
            stats = load_gene_stats(store_dir)
        else:
            stats = compute_gene_stats(store)
        seq = rank_encode(row_slice, stats, max_len)
        click.echo(" ".join(str(int(t)) for t in seq.tokens))
    else:
        click.echo("cols " + " ".join(str(int(c)) for c in row_slice.cols))
        click.echo("vals " + " ".join(repr(float(v)) for v in row_slice.vals))


@main.command()
@click.argument("input_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out", type=click.Path())
@click.option("--max-per-shard", type=int, required=True, help="Samples per shard archive.")
@_tool_errors
def shard(input_dir, out, max_per_shard):
    """Pack a directory of <key>.<ext> files into tar shards."""
    by_key: dict[str, dict[str, bytes]] = {}
    for path in sorted(Path(input_dir).iterdir()):
        if not path.is_file():
            continue
        if "." not in path.name:
            raise ValidationError(f"file {path.name!r} has no extension")
        key, ext = path.name.split(".", 1)
        by_key.setdefault(key, {})[ext] = path.read_bytes()
    samples = (shards_mod.Sample(key, parts) for key, parts in sorted(by_key.items()))
    shard_set = shards_mod.write_shards(samples, out, max_per_shard)
    click.echo(f"shards={len(shard_set.shard_paths)} samples={shard_set.total_samples}")


@main.command("bench-iterate")
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--epochs", type=int, default=1, show_default=True)
@_tool_errors
def bench_iterate(store_dir, epochs):
    """Time full row iteration over a store."""
    report = bench_mod.bench_iterate(store_dir, epochs)
    payload = {
        "n_rows": report.n_rows,
        "epochs": report.epochs,
        "per_epoch_seconds": report.per_epoch_seconds,
        "rows_per_second": report.rows_per_second,
        "checksum": report.checksum,
    }
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


@main.command("bench-batching")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Corpus config JSON.")
@click.option("--budget", type=float, required=True)
@click.option("--max-width", type=float, required=True)
@click.option("--min-count", type=int, required=True)
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--static-batch-size", type=int, default=None,
              help="Fixed cardinality for the static baseline (default: budget / mean cost).")
@click.option("--adaptive-bin-width", type=int, default=None,
              help="Size-bin width for the adaptive baseline.")
@click.option("--gnuplot", is_flag=True, help="Also emit ready-to-plot column files.")
@_tool_errors
def bench_batching(corpus_path, budget, max_width, min_count, epochs, seed, out_dir,
                   static_batch_size, adaptive_bin_width, gnuplot):
    """Run the static / adaptive / bucketed batching comparison."""
    config = CorpusConfig.from_json_file(corpus_path)
    corpus = generate_corpus(config, seed)
    model = corpus.exact_cost_model()
    result = bench_mod.compare_strategies(
        corpus, model, budget, max_width, min_count, epochs=epochs, seed=seed,
        static_batch_size=static_batch_size, adaptive_bin_width=adaptive_bin_width,
    )
    bench_mod.write_reports(result, out_dir, gnuplot=gnuplot)
    metrics = result["metrics"]
    for name in ("static", "adaptive", "bucketed"):
        click.echo(
            f"{name}: tv={metrics['tv'][name]:.4f} "
            f"median_padding={metrics['median_padding'][name]:.1f} "
            f"skipped={metrics['skipped'][name]}"
        )


if __name__ == "__main__":
    main()
