#!/usr/bin/env python3
"""Run the reference batching comparison and print the headline metrics.

Equivalent to:

    densefeed bench-batching --corpus configs/reference_corpus.json \
        --budget 26145 --max-width 3 --min-count 20 --epochs 10 --seed 7 \
        --out report/ --gnuplot

The budget is 1.05x the largest single-sample predicted cost of the
reference corpus (cost(150) = 150*16 + 150^2 = 24900 elements), so no
strategy is forced to skip a sample outright.
"""

import argparse
from pathlib import Path

from densefeed.bench import compare_strategies, write_reports
from densefeed.corpus import CorpusConfig, generate_corpus

ROOT = Path(__file__).resolve().parent.parent

DEFAULTS = dict(budget=26145.0, max_width=3.0, min_count=20, epochs=10, seed=7)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", default=str(ROOT / "configs" / "reference_corpus.json"))
    parser.add_argument("--budget", type=float, default=DEFAULTS["budget"])
    parser.add_argument("--max-width", type=float, default=DEFAULTS["max_width"])
    parser.add_argument("--min-count", type=int, default=DEFAULTS["min_count"])
    parser.add_argument("--epochs", type=int, default=DEFAULTS["epochs"])
    parser.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    parser.add_argument("--out", default="report")
    args = parser.parse_args()

    config = CorpusConfig.from_json_file(args.corpus)
    corpus = generate_corpus(config, args.seed)
    result = compare_strategies(
        corpus, corpus.exact_cost_model(), args.budget,
        args.max_width, args.min_count, epochs=args.epochs, seed=args.seed,
    )
    write_reports(result, args.out, gnuplot=True)
    metrics = result["metrics"]
    for name in ("static", "adaptive", "bucketed"):
        print(f"{name:9s} tv={metrics['tv'][name]:.4f} "
              f"median_padding={metrics['median_padding'][name]:.1f} "
              f"skipped={metrics['skipped'][name]}")
    print(f"reports written to {args.out}/")


if __name__ == "__main__":
    main()
