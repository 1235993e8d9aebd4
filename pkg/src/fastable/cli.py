"""Command-line entry point: ``fastable <subcommand> ...``.

Every subcommand prints its effective configuration as a ``# config:`` JSON
line first, so a run can be reproduced from its own output.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from . import analysis, bench, matcher, sequence_store
from .errors import FastableError


def _echo_config(args: argparse.Namespace) -> None:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    print("# config: " + json.dumps(cfg, sort_keys=True))


def _write_text(path: Path, text: str) -> None:
    # write-then-rename so a failed run never leaves a half-written output
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="")
    tmp.replace(path)


def _save_db(db: sequence_store.SequenceDatabase, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    sequence_store.save(db, tmp)
    tmp.replace(path)


def cmd_describe(args) -> int:
    db = sequence_store.load(args.db) if args.db.exists() else None
    if db is not None and args.name in db.names:
        raise FastableError(f"segment {args.name!r} already exists in {args.db}")
    segment = sequence_store.ingest_directory(args.images_dir, args.name)
    if db is None:
        db = sequence_store.SequenceDatabase((segment,), segment.descriptor_bits)
    else:
        db = db.with_segment(segment)
    _save_db(db, args.db)
    print(f"segment {segment.name}: {len(segment)} frames, {segment.descriptor_bits} bits per descriptor")
    print(f"database {args.db}: {len(db)} segments")
    return 0


def cmd_tune(args) -> int:
    db = sequence_store.load(args.db)
    minima = analysis.cross_minima(db, args.c_l)
    tuned = analysis.auto_tune(db, args.c_l)
    _save_db(tuned, args.db)
    scale = args.c_l * db.descriptor_bits
    for seg in tuned.segments:
        print(f"{seg.name}: t_r={seg.threshold!r} (raw {minima[seg.name]} / {scale})")
    return 0


def cmd_match(args) -> int:
    db = sequence_store.load(args.db)
    query = sequence_store.ingest_directory(args.query_dir, "query")
    params = matcher.MatchParams(args.c_l, args.threshold)
    if args.c_l > len(query):
        raise FastableError(f"c_l={args.c_l} exceeds query length {len(query)}")
    if query.descriptor_bits != db.descriptor_bits:
        raise FastableError(f"query uses {query.descriptor_bits}-bit descriptors, database {db.descriptor_bits}")

    if args.matcher == "fast":
        state = matcher.stream_open(db, params)
        recs = []
        for d in query.descriptors:
            recs.extend(matcher.stream_push(state, d))
    else:
        recs = matcher.match_database(db, query.words, params, matcher="baseline")

    _write_text(args.out, matcher.recognitions_csv(recs, args.c_l, db.descriptor_bits))
    covered = {r.query_index for r in recs}
    windows = len(query) - args.c_l + 1
    print(f"{len(recs)} recognitions covering {len(covered)} of {windows} query windows -> {args.out}")
    return 0


def cmd_cluster(args) -> int:
    recs = matcher.read_recognitions(args.matches_csv)
    clusters = analysis.cluster(recs, analysis.ClusterParams(args.eps, args.min_pts))
    buf = io.StringIO()
    analysis.write_clusters(clusters, buf)
    _write_text(args.out, buf.getvalue())
    print(f"{len(recs)} recognitions -> {len(clusters)} clusters -> {args.out}")
    return 0


def cmd_score(args) -> int:
    clusters = analysis.read_clusters(args.clusters_csv)
    truth = analysis.read_truth(args.truth_csv)
    correct, incorrect, distinct = analysis.score_against_ground_truth(clusters, truth)
    print("correct,incorrect,distinct")
    print(f"{correct},{incorrect},{distinct}")
    return 0


def cmd_bench(args) -> int:
    specs = bench.grid(args.n, args.c_l, m=args.m, flip_prob=args.flip_prob, seed=args.seed)
    report = bench.run_grid(
        specs,
        repetitions=args.repetitions,
        warmup=not args.no_warmup,
        progress=lambda r: print(f"  n={r.n} c_l={r.c_l}: speedup {r.speedup:.1f}", file=sys.stderr),
    )
    if args.out is not None:
        buf = io.StringIO()
        report.write_csv(buf)
        _write_text(args.out, buf.getvalue())
    print(report.table())
    return 0


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 1]")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastable", description="Sequence-based visual place recognition.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="ingest an image directory as a new database segment")
    p.add_argument("images_dir", type=Path)
    p.add_argument("--name", required=True, help="segment name (unique within the database)")
    p.add_argument("--db", required=True, type=Path, help="database file, created if missing")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("tune", help="set per-segment thresholds from cross-segment minima")
    p.add_argument("--db", required=True, type=Path)
    p.add_argument("--c-l", dest="c_l", required=True, type=_positive_int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("match", help="match a query image directory against the database")
    p.add_argument("--db", required=True, type=Path)
    p.add_argument("--query", dest="query_dir", required=True, type=Path)
    p.add_argument("--c-l", dest="c_l", required=True, type=_positive_int)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--matcher", choices=("fast", "baseline"), default="fast")
    p.add_argument("--threshold", type=_unit_interval, default=None,
                   help="threshold for segments without a tuned one")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("cluster", help="DBScan-cluster a recognition CSV")
    p.add_argument("matches_csv", type=Path)
    p.add_argument("--eps", type=float, default=2.0)
    p.add_argument("--min-pts", dest="min_pts", type=_positive_int, default=1)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("score", help="score clusters against a ground-truth CSV")
    p.add_argument("clusters_csv", type=Path)
    p.add_argument("truth_csv", type=Path)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="time baseline vs fast matcher on synthetic data")
    p.add_argument("--n", nargs="+", type=_positive_int, default=[500, 1000, 2000, 4000])
    p.add_argument("--c-l", dest="c_l", nargs="+", type=_positive_int, default=[20, 40, 60, 80])
    p.add_argument("--m", type=_positive_int, default=1000)
    p.add_argument("--flip-prob", dest="flip_prob", type=_unit_interval, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--no-warmup", dest="no_warmup", action="store_true")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _echo_config(args)
    try:
        return args.func(args)
    except (FastableError, ValueError, OSError) as exc:
        print(f"fastable {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
