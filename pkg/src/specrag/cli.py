"""Command-line interface.

Three subcommands:

* ``gen``: generate a synthetic labeled corpus and query stream.
* ``bench``: replay a query stream through one retrieval method and write a
  metrics report.
* ``report``: re-emit a JSON report as JSON or trace CSV.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import os
import sys

import numpy as np

from . import bench as bench_mod
from . import fileio
from .errors import ConfigError, FormatError, IoError, RetrievalError, SpecragError
from .workload import GenConfig, LabeledDoc, LabeledQuery, gen_corpus, gen_queries

PREFILL_ID_START = 1_000_000

_GEN_FIELDS = {f.name: f.type for f in dataclasses.fields(GenConfig)}


def _parse_gen_config(path: str) -> tuple[GenConfig, int]:
    """Parse a flat key=value config file; unknown keys are rejected."""
    values: dict = {}
    n_prefill = 0
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "n_prefill":
                n_prefill = int(val)
                continue
            if key not in _GEN_FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                typ = float if key in ("entity_signal", "attr_signal", "noise", "zipf_s") else int
                values[key] = typ(val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return GenConfig(**values), n_prefill


def _write_stream(out_dir: str, stem: str, embs: np.ndarray, labels) -> None:
    fileio.write_embeddings(os.path.join(out_dir, f"{stem}.hsem"), embs)
    fileio.write_labels(os.path.join(out_dir, f"{stem}.tsv"), labels)


def _cmd_gen(args) -> int:
    cfg, n_prefill = _parse_gen_config(args.config)
    cfg.validate()
    os.makedirs(args.out, exist_ok=True)
    docs, profiles = gen_corpus(cfg)
    queries = gen_queries(cfg, profiles)
    _write_stream(
        args.out,
        "docs",
        np.stack([d.embedding for d in docs]),
        ((d.doc_id, d.entity_id, sorted(d.covered_attrs)) for d in docs),
    )
    _write_stream(
        args.out,
        "queries",
        np.stack([q.embedding for q in queries]),
        ((q.query_id, q.entity_id, (q.attr_id,)) for q in queries),
    )
    if n_prefill > 0:
        pre = gen_queries(cfg, profiles, n=n_prefill, stream_key=2, id_start=PREFILL_ID_START)
        _write_stream(
            args.out,
            "prefill",
            np.stack([q.embedding for q in pre]),
            ((q.query_id, q.entity_id, (q.attr_id,)) for q in pre),
        )
    print(f"wrote {len(docs)} docs and {len(queries)} queries to {args.out}")
    return 0


def _load_docs(corpus_dir: str) -> list[LabeledDoc]:
    embs = fileio.read_embeddings(os.path.join(corpus_dir, "docs.hsem"))
    labels = fileio.read_labels(os.path.join(corpus_dir, "docs.tsv"))
    if len(labels) != embs.shape[0]:
        raise FormatError(f"{corpus_dir}: docs.tsv has {len(labels)} rows, embeddings {embs.shape[0]}")
    return [
        LabeledDoc(rec_id, embs[i].astype(np.float64), entity, frozenset(attrs))
        for i, (rec_id, entity, attrs) in enumerate(labels)
    ]


def _load_queries(hsem_path: str) -> list[LabeledQuery]:
    embs = fileio.read_embeddings(hsem_path)
    sidecar = os.path.splitext(hsem_path)[0] + ".tsv"
    labels = fileio.read_labels(sidecar)
    if len(labels) != embs.shape[0]:
        raise FormatError(f"{sidecar} has {len(labels)} rows, embeddings {embs.shape[0]}")
    out = []
    for i, (rec_id, entity, attrs) in enumerate(labels):
        if len(attrs) != 1:
            raise FormatError(f"{sidecar}: query {rec_id} must have exactly one attr")
        out.append(LabeledQuery(rec_id, embs[i].astype(np.float64), entity, attrs[0]))
    return out


def _cmd_bench(args) -> int:
    docs = _load_docs(args.corpus)
    queries = _load_queries(args.queries)
    prefill = _load_queries(args.prefill) if args.prefill else None

    retriever = bench_mod.make_retriever(
        args.method,
        k=args.k,
        tau=args.tau,
        h_max=args.h_max,
        n_buckets=args.n_buckets,
        n_probe=args.n_probe,
        subset_fraction=args.subset_fraction,
        seed=args.seed,
        reuse_threshold=args.reuse_threshold,
        fuzzy_validation=not args.no_fuzzy_validation,
        fuzzy_enhance=not args.no_fuzzy_enhance,
    )
    X = np.stack([d.embedding for d in docs])
    ids = np.array([d.doc_id for d in docs], dtype=np.int64)
    retriever.fit(X, ids)

    config = {
        "method": args.method,
        "k": args.k,
        "tau": args.tau,
        "h_max": args.h_max,
        "n_buckets": args.n_buckets,
        "n_probe": args.n_probe,
        "subset_fraction": args.subset_fraction,
        "seed": args.seed,
        "reuse_threshold": args.reuse_threshold,
        "fuzzy_validation": not args.no_fuzzy_validation,
        "fuzzy_enhance": not args.no_fuzzy_enhance,
        "n_prefill": len(prefill) if prefill else 0,
    }
    report = bench_mod.run_benchmark(
        retriever, docs, queries, keep_trace=True, config=config, prefill_queries=prefill
    )
    bench_mod.emit_report(report, args.report, fmt="json", include_trace=args.trace)
    print(
        f"method={args.method} n={report.n_queries} avg_latency_s={report.avg_latency_s:.6f} "
        f"doc_hit_rate={report.doc_hit_rate:.4f} dar={report.dar:.4f}"
    )
    return 0


def _cmd_report(args) -> int:
    report = bench_mod.load_report(args.input)
    if args.out:
        bench_mod.emit_report(report, args.out, fmt=args.format)
        return 0
    if args.format == "json":
        print(json.dumps(bench_mod.report_to_dict(report), indent=2))
    else:
        buf = io.StringIO()
        import csv as _csv

        writer = _csv.writer(buf)
        writer.writerow(bench_mod.TRACE_FIELDS)
        for r in report.trace or []:
            writer.writerow([bench_mod._csv_cell(getattr(r, f)) for f in bench_mod.TRACE_FIELDS])
        sys.stdout.write(buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specrag")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic corpus and query stream")
    p_gen.add_argument("--config", required=True, help="flat key=value config file")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.set_defaults(func=_cmd_gen)

    p_bench = sub.add_parser("bench", help="replay a query stream and report metrics")
    p_bench.add_argument("--corpus", required=True, help="directory with docs.hsem and docs.tsv")
    p_bench.add_argument("--queries", required=True, help="query embedding file (.hsem)")
    p_bench.add_argument("--method", required=True, choices=bench_mod.METHODS)
    p_bench.add_argument("--k", type=int, default=10)
    p_bench.add_argument("--tau", type=float, default=0.2)
    p_bench.add_argument("--h-max", type=int, default=5000)
    p_bench.add_argument("--n-buckets", type=int, default=256)
    p_bench.add_argument("--n-probe", type=int, default=8)
    p_bench.add_argument("--subset-fraction", type=float, default=1.0)
    p_bench.add_argument("--seed", type=int, default=42)
    p_bench.add_argument("--report", required=True, help="output report path (JSON)")
    p_bench.add_argument("--trace", action="store_true", help="include per-query trace rows")
    p_bench.add_argument("--reuse-threshold", type=float, default=0.95)
    p_bench.add_argument("--prefill", help="optional prefill query file (.hsem)")
    p_bench.add_argument("--no-fuzzy-validation", action="store_true")
    p_bench.add_argument("--no-fuzzy-enhance", action="store_true")
    p_bench.set_defaults(func=_cmd_bench)

    p_rep = sub.add_parser("report", help="re-emit a report as JSON or CSV")
    p_rep.add_argument("--in", dest="input", required=True)
    p_rep.add_argument("--format", choices=("json", "csv"), default="json")
    p_rep.add_argument("--out", help="output path; stdout if omitted")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (RetrievalError, IoError, SpecragError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
