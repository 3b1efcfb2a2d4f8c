#!/usr/bin/env python3
"""Time build_matrix against the per-character cap and worker count.

    python3 scripts/bench_matrix.py --caps 25 50 100 --workers 1 2 4
"""
import argparse
import os
import time

from atpc.corpus import SynthConfig, generate_synthetic_corpus, iter_segments
from atpc.distance import dtw_cost_only
from atpc.matrix import build_embedding_set, build_matrix


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--caps", type=int, nargs="+", default=[25, 50, 100])
    p.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4])
    p.add_argument("--chars", type=int, default=20)
    p.add_argument("--utts", type=int, default=500)
    args = p.parse_args()

    corpus = generate_synthetic_corpus(SynthConfig(n_chars=args.chars, n_utts=args.utts))
    segments = list(iter_segments(corpus.alignments, corpus.embeddings))
    dtw_cost_only(segments[0].vectors, segments[1].vectors)  # compile outside the timer
    print(f"{os.cpu_count()} CPUs, {len(segments)} segments")
    print(f"{'cap':>5} {'workers':>7} {'dtw calls':>10} {'seconds':>8} {'us/call':>8}")
    for cap in args.caps:
        eset = build_embedding_set(segments, sample_cap=cap)
        sizes = [len(eset.segments[c]) for c in eset.vocab]
        calls = sum(sizes[j] * sizes[k] for j in range(len(sizes)) for k in range(j, len(sizes)))
        base = None
        for w in args.workers:
            t0 = time.perf_counter()
            m = build_matrix(eset, "cosine", workers=w)
            dt = time.perf_counter() - t0
            base = base if base is not None else m.values.tobytes()
            same = "" if m.values.tobytes() == base else "  MISMATCH"
            print(f"{cap:5d} {w:7d} {calls:10d} {dt:8.2f} {1e6 * dt / calls:8.2f}{same}")


if __name__ == "__main__":
    main()
