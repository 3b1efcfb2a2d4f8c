"""Command-line entry point: ``atpc <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import biasing, corpus, metrics
from .distance import VectorMetric
from .errors import AtpcError
from .matrix import build_embedding_set, build_matrix, load_matrix, normalize, save_matrix

log = logging.getLogger("atpc")


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def cmd_synth(args):
    cfg = corpus.SynthConfig(
        seed=args.seed, n_chars=args.chars, n_groups=args.groups, n_utts=args.utts,
        dim=args.dim, noise=args.noise, frame_rate_hz=args.frame_rate,
    )
    out = Path(args.out)
    data = corpus.generate_synthetic_corpus(cfg)
    corpus.save_synthetic_corpus(data, out)
    dev = corpus.make_biasing_set(
        data.vocab, data.lexicon, n_hotwords=args.hotwords, n_utts=args.bias_utts,
        corrupt_rate=args.corrupt_rate, filler_error_rate=args.filler_error_rate, seed=args.seed + 1,
    )
    test = corpus.make_biasing_set(
        data.vocab, data.lexicon, hotwords=dev.hotwords, n_utts=args.bias_utts,
        corrupt_rate=args.corrupt_rate, filler_error_rate=args.filler_error_rate, seed=args.seed + 2,
    )
    corpus.save_hotwords(dev.hotwords, out / "hotwords.txt")
    for name, part in (("dev", dev), ("test", test)):
        corpus.save_transcripts(part.references, out / f"{name}_ref.tsv")
        corpus.save_transcripts(part.hypotheses, out / f"{name}_hyp.tsv")
    print(f"wrote {len(data.alignments)} utterances, {len(data.vocab)} characters, "
          f"{len(dev.hotwords)} hotwords to {out}")


def cmd_build(args):
    alignments = corpus.load_alignment_dir(args.alignments)
    embeddings = corpus.load_embedding_dir(args.embeddings, [a.utterance_id for a in alignments])
    eset = build_embedding_set(corpus.iter_segments(alignments, embeddings),
                               args.cap, args.min_occ, args.seed)
    log.info("embedding set: %d characters", len(eset))
    m = build_matrix(eset, args.metric, workers=args.workers)
    save_matrix(m, args.out)
    print(f"wrote {len(m.vocab)}x{len(m.vocab)} raw {m.metric.value} matrix to {args.out}")


def cmd_normalize(args):
    m = load_matrix(args.inp)
    save_matrix(normalize(m), args.out)
    print(f"wrote normalized matrix to {args.out}")


def cmd_disparity(args):
    m = load_matrix(args.matrix)
    if m.normalized:
        raise AtpcError(f"{args.matrix}: disparity is defined on the raw matrix")
    rep = metrics.disparity(m, corpus.load_lexicon(args.lexicon))
    print(f"homophone_pairs      {rep.n_homophone_pairs}")
    print(f"non_homophone_pairs  {rep.n_non_homophone_pairs}")
    print(f"mean_homophone       {rep.mean_homophone:.6g}")
    print(f"mean_non_homophone   {rep.mean_non_homophone:.6g}")
    print(f"relative_disparity   {100 * rep.relative_disparity:.2f}%")
    if args.json:
        _write_json(vars(rep), args.json)


def cmd_bias(args):
    cfg = biasing.BiasConfig(load_matrix(args.matrix), corpus.load_hotwords(args.hotwords), args.threshold)
    hyps = corpus.load_transcripts(args.hyp)
    outcomes = biasing.bias_corpus(hyps.values(), cfg, workers=args.workers)
    corpus.save_transcripts({u: o.rewritten for u, o in zip(hyps, outcomes)}, args.out)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as f:
            for utt, o in zip(hyps, outcomes):
                rec = {
                    "utt": utt, "original": o.original, "rewritten": o.rewritten,
                    "applied": [dict(m.to_dict(), exact=m.exact) for m in o.applied],
                    "skipped": [dict(m.to_dict(), reason=r) for m, r in o.skipped],
                }
                f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    changed = sum(o.rewritten != o.original for o in outcomes)
    print(f"rewrote {changed} of {len(outcomes)} hypotheses -> {args.out}")


def cmd_score(args):
    ids, refs, hyps = metrics.join_transcripts(corpus.load_transcripts(args.ref),
                                               corpus.load_transcripts(args.hyp))
    hotwords = corpus.load_hotwords(args.hotwords) if args.hotwords else []
    rep = metrics.score(refs, hyps, hotwords)
    print(rep.format())
    if args.json:
        _write_json(rep.to_dict(), args.json)


def _parse_grid(text):
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if not grid:
        raise argparse.ArgumentTypeError("grid is empty")
    return grid


def cmd_sweep(args):
    ids, refs, hyps = metrics.join_transcripts(corpus.load_transcripts(args.ref),
                                               corpus.load_transcripts(args.hyp))
    res = biasing.sweep_threshold(refs, hyps, corpus.load_hotwords(args.hotwords),
                                  load_matrix(args.matrix), args.grid, workers=args.workers)
    table = res.format()
    print(table)
    print(f"selected threshold {res.selected:.2f}")
    if args.out:
        Path(args.out).write_text(table + "\n", encoding="utf-8")


def build_parser():
    p = argparse.ArgumentParser(prog="atpc", description="Pronunciation-distance matrices from "
                                "aligned speech embeddings, and hotword biasing with them.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a seeded synthetic corpus")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=7, help="RNG seed (default 7)")
    s.add_argument("--chars", type=int, default=20, help="vocabulary size (default 20)")
    s.add_argument("--groups", type=int, default=8, help="homophone groups (default 8)")
    s.add_argument("--utts", type=int, default=500, help="training utterances (default 500)")
    s.add_argument("--dim", type=int, default=16, help="embedding dimension (default 16)")
    s.add_argument("--noise", type=float, default=0.3, help="frame noise std (default 0.3)")
    s.add_argument("--frame-rate", type=int, default=50, help="frames per second (default 50)")
    s.add_argument("--hotwords", type=int, default=5, help="number of hotwords (default 5)")
    s.add_argument("--bias-utts", type=int, default=100, help="dev/test utterances each (default 100)")
    s.add_argument("--corrupt-rate", type=float, default=0.3,
                   help="homophone substitution rate inside hotwords (default 0.3)")
    s.add_argument("--filler-error-rate", type=float, default=0.05,
                   help="random substitution rate outside hotwords (default 0.05)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("build", help="build the raw distance matrix")
    s.add_argument("--alignments", required=True, help="directory of *.jsonl alignment files")
    s.add_argument("--embeddings", required=True, help="directory of <utt>.emb files")
    s.add_argument("--out", required=True, help="output matrix file")
    s.add_argument("--metric", choices=[m.value for m in VectorMetric], default="cosine",
                   help="frame distance (default cosine)")
    s.add_argument("--cap", type=int, default=100, help="segments kept per character (default 100)")
    s.add_argument("--min-occ", type=int, default=3, help="drop rarer characters (default 3)")
    s.add_argument("--seed", type=int, default=0, help="sampling seed (default 0)")
    s.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("normalize", help="row-normalize a raw matrix")
    s.add_argument("--in", dest="inp", required=True, help="raw matrix file")
    s.add_argument("--out", required=True, help="normalized matrix file")
    s.set_defaults(func=cmd_normalize)

    s = sub.add_parser("disparity", help="homophone vs non-homophone distance")
    s.add_argument("--matrix", required=True, help="raw matrix file")
    s.add_argument("--lexicon", required=True, help="character<TAB>key file")
    s.add_argument("--json", default=None, help="also write the report as JSON (default: off)")
    s.set_defaults(func=cmd_disparity)

    s = sub.add_parser("bias", help="rewrite hypotheses towards hotwords")
    s.add_argument("--matrix", required=True, help="normalized matrix file")
    s.add_argument("--hotwords", required=True, help="hotword list")
    s.add_argument("--hyp", required=True, help="hypotheses, utt<TAB>text")
    s.add_argument("--out", required=True, help="rewritten hypotheses")
    s.add_argument("--threshold", type=float, default=biasing.DEFAULT_THRESHOLD,
                   help=f"candidate distance threshold (default {biasing.DEFAULT_THRESHOLD})")
    s.add_argument("--trace", default=None, help="per-utterance match trace, JSON lines (default: off)")
    s.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")
    s.set_defaults(func=cmd_bias)

    s = sub.add_parser("score", help="CER, B-CER, U-CER and hotword R/P/F")
    s.add_argument("--ref", required=True, help="references, utt<TAB>text")
    s.add_argument("--hyp", required=True, help="hypotheses, utt<TAB>text")
    s.add_argument("--hotwords", default=None, help="hotword list (default: none)")
    s.add_argument("--json", default=None, help="also write the report as JSON (default: off)")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("sweep", help="pick the biasing threshold on a dev set")
    s.add_argument("--matrix", required=True, help="normalized matrix file")
    s.add_argument("--hotwords", required=True, help="hotword list")
    s.add_argument("--ref", required=True, help="dev references")
    s.add_argument("--hyp", required=True, help="dev hypotheses")
    s.add_argument("--grid", type=_parse_grid, default=list(biasing.DEFAULT_GRID),
                   help="comma-separated thresholds (default 1.01,...,1.09)")
    s.add_argument("--out", default=None, help="write the sweep table here (default: stdout only)")
    s.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except AtpcError as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"error: {args.command}: {name}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
