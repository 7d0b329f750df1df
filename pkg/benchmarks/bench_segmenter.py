"""Benchmark: compiled boundary scan vs the pure-Python fallback.

Runs the same segmentation workload through both backends and reports
throughput and speedup.  Usage:

    python3 benchmarks/bench_segmenter.py [--repeats 5]
"""

import argparse
import random
import time

from steptag.model import SegmenterConfig
from steptag.segmenter import _pure

try:
    from steptag.segmenter import _speedups
except ImportError:
    _speedups = None

WORDS = ["let", "me", "check", "the", "algebra", "again", "so", "that",
         "both", "sides", "agree", "with", "seven", "naïve", "七"]
GLUE = [" ", " ", " ", ".\n\n", ", ", ". "]


def make_text(rng: random.Random, n_pieces: int) -> str:
    out = []
    for _ in range(n_pieces):
        out.append(rng.choice(WORDS))
        out.append(rng.choice(GLUE))
    return "".join(out)


def bench_pure(texts, config):
    start = time.perf_counter()
    for text in texts:
        _pure.scan(text, config.delimiters, config.k, config.max_steps)
    return time.perf_counter() - start


def bench_compiled(texts, config):
    encoded = [t.encode("utf-8") for t in texts]
    delims = tuple(d.encode("utf-8") for d in config.delimiters)
    start = time.perf_counter()
    for data in encoded:
        _speedups.scan_bytes(data, delims, config.k, config.max_steps)
    return time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--texts", type=int, default=200)
    parser.add_argument("--pieces", type=int, default=2000,
                        help="word/glue pieces per text")
    args = parser.parse_args()

    if _speedups is None:
        raise SystemExit("compiled backend unavailable; nothing to compare")

    rng = random.Random(0)
    texts = [make_text(rng, args.pieces) for _ in range(args.texts)]
    total_mb = sum(len(t.encode()) for t in texts) / 1e6

    print(f"{args.texts} texts, {total_mb:.1f} MB total, "
          f"best of {args.repeats} repeats\n")
    print(f"{'k':>4}  {'pure (s)':>9}  {'compiled (s)':>12}  "
          f"{'pure MB/s':>9}  {'compiled MB/s':>13}  {'speedup':>7}")
    for k in (1, 30, 100):
        config = SegmenterConfig(k=k)
        # cross-check once per k before timing
        for text in texts[:3]:
            pure_spans = _pure.scan(text, config.delimiters, k, config.max_steps)
            data = text.encode("utf-8")
            delims = tuple(d.encode("utf-8") for d in config.delimiters)
            compiled_spans = _speedups.scan_bytes(data, delims, k, config.max_steps)
            pure_texts = [text[s:e] for s, e, _ in pure_spans]
            compiled_texts = [data[s:e].decode("utf-8") for s, e, _ in compiled_spans]
            assert pure_texts == compiled_texts, "backend disagreement"

        t_pure = min(bench_pure(texts, config) for _ in range(args.repeats))
        t_comp = min(bench_compiled(texts, config) for _ in range(args.repeats))
        print(f"{k:>4}  {t_pure:>9.3f}  {t_comp:>12.3f}  "
              f"{total_mb / t_pure:>9.1f}  {total_mb / t_comp:>13.1f}  "
              f"{t_pure / t_comp:>6.1f}x")


if __name__ == "__main__":
    main()
