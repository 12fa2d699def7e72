"""Benchmark harness: stream replay, metric aggregation, baselines, reports.

The harness replays a labeled query stream through any retriever exposing
``retrieve(query_id, embedding) -> RetrievalOutcome``, records one trace row
per query, and aggregates the metric suite:

* ``avg_latency_s``: mean per-query virtual latency.
* ``doc_hit_rate``: fraction of queries whose returned documents include at
  least one golden document for that query.
* ``dar``: draft acceptance rate.
* ``car``: fraction of acceptances whose matched cached query targets the
  same entity as the current query (precision of re-identification).
* ``hit_rate_at_accept``: golden hit rate restricted to accepted drafts.
* ``l_at_da`` / ``l_at_dr``: mean latency conditioned on acceptance /
  rejection, so ``avg == dar * l_at_da + (1 - dar) * l_at_dr`` holds by
  construction.

Replay is sequential; cache evolution and therefore every reported number
is deterministic for fixed seeds, and reports serialize with a fixed field
order so equal runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .backend import FullRetrievalBackend, LatencyBreakdown, LatencyModel
from .cache import QueryCache
from .engine import RetrievalOutcome, SpeculativeRetriever
from .errors import ConfigError, IoError, RetrievalError
from .index import FlatIndex, Hit, rank_hits
from .core import similarity_batch
from .validation import check_fitted, check_matrix, check_vector
from .workload import LabeledDoc, LabeledQuery

METHOD_FULL = "full"
METHOD_REUSE = "reuse"
METHOD_HAS = "has"
METHODS = (METHOD_FULL, METHOD_REUSE, METHOD_HAS)

TRACE_FIELDS = [
    "ordinal",
    "query_id",
    "entity_id",
    "attr_id",
    "accepted",
    "matched_query_id",
    "matched_entity_id",
    "golden_hit",
    "n_docs",
    "n_evicted",
    "edge_seconds",
    "cloud_seconds",
    "total_seconds",
]

AGGREGATE_FIELDS = [
    "n_queries",
    "avg_latency_s",
    "doc_hit_rate",
    "dar",
    "car",
    "hit_rate_at_accept",
    "l_at_da",
    "l_at_dr",
    "cache_mem_bytes",
]


@dataclass(frozen=True)
class TraceRow:
    ordinal: int
    query_id: int
    entity_id: int
    attr_id: int
    accepted: bool
    matched_query_id: int | None
    matched_entity_id: int | None
    golden_hit: bool
    n_docs: int
    n_evicted: int
    edge_seconds: float
    cloud_seconds: float
    total_seconds: float


@dataclass
class MetricsReport:
    n_queries: int
    avg_latency_s: float
    doc_hit_rate: float
    dar: float
    car: float | None
    hit_rate_at_accept: float | None
    l_at_da: float | None
    l_at_dr: float | None
    cache_mem_bytes: int
    config: dict
    trace: list[TraceRow] | None = None


# --------------------------------------------------------------------- replay


def run_benchmark(
    retriever,
    docs: Sequence[LabeledDoc],
    queries: Sequence[LabeledQuery],
    keep_trace: bool = True,
    config: dict | None = None,
    prefill_queries: Sequence[LabeledQuery] | None = None,
) -> MetricsReport:
    """Replay ``queries`` in order through ``retriever`` and aggregate.

    The retriever must already be fitted on the corpus embeddings. Cold
    start is included: the replay begins against whatever cache state the
    retriever has (an empty one unless ``prefill_queries`` is given).
    """
    doc_label = {d.doc_id: (d.entity_id, d.covered_attrs) for d in docs}
    query_entity = {q.query_id: q.entity_id for q in queries}
    if prefill_queries:
        if not hasattr(retriever, "prefill"):
            raise ConfigError("retriever does not support cache prefill")
        query_entity.update({q.query_id: q.entity_id for q in prefill_queries})
        retriever.prefill((q.query_id, q.embedding) for q in prefill_queries)

    rows: list[TraceRow] = []
    for ordinal, q in enumerate(queries):
        try:
            out: RetrievalOutcome = retriever.retrieve(q.query_id, q.embedding)
        except Exception as exc:  # noqa: BLE001 - annotate failing position
            raise RetrievalError(f"query ordinal {ordinal} (id {q.query_id}): {exc}") from exc
        golden = any(
            doc_label[h.doc_id][0] == q.entity_id and q.attr_id in doc_label[h.doc_id][1]
            for h in out.docs
            if h.doc_id in doc_label
        )
        matched_entity = (
            query_entity.get(out.matched_query) if out.matched_query is not None else None
        )
        rows.append(
            TraceRow(
                ordinal=ordinal,
                query_id=q.query_id,
                entity_id=q.entity_id,
                attr_id=q.attr_id,
                accepted=out.accepted,
                matched_query_id=out.matched_query,
                matched_entity_id=matched_entity,
                golden_hit=golden,
                n_docs=len(out.docs),
                n_evicted=len(out.evictions),
                edge_seconds=out.latency.edge_seconds,
                cloud_seconds=out.latency.cloud_seconds,
                total_seconds=out.latency.total_seconds,
            )
        )

    agg = aggregates_from_trace(rows)
    cache = getattr(retriever, "cache_", None)
    return MetricsReport(
        n_queries=agg["n_queries"],
        avg_latency_s=agg["avg_latency_s"],
        doc_hit_rate=agg["doc_hit_rate"],
        dar=agg["dar"],
        car=agg["car"],
        hit_rate_at_accept=agg["hit_rate_at_accept"],
        l_at_da=agg["l_at_da"],
        l_at_dr=agg["l_at_dr"],
        cache_mem_bytes=cache.memory_footprint() if cache is not None else 0,
        config=dict(config) if config else {},
        trace=rows if keep_trace else None,
    )


def aggregates_from_trace(rows: Sequence[TraceRow]) -> dict:
    """Recompute every aggregate metric from trace rows alone."""
    n = len(rows)
    accepts = [r for r in rows if r.accepted]
    rejects = [r for r in rows if not r.accepted]
    n_a, n_r = len(accepts), len(rejects)
    avg = math.fsum(r.total_seconds for r in rows) / n if n else 0.0
    car_pair = compute_car(rows)
    return {
        "n_queries": n,
        "avg_latency_s": avg,
        "doc_hit_rate": sum(r.golden_hit for r in rows) / n if n else 0.0,
        "dar": n_a / n if n else 0.0,
        "car": car_pair[0],
        "hit_rate_at_accept": car_pair[1],
        "l_at_da": math.fsum(r.total_seconds for r in accepts) / n_a if n_a else None,
        "l_at_dr": math.fsum(r.total_seconds for r in rejects) / n_r if n_r else None,
    }


def compute_car(
    rows: Sequence[TraceRow],
    query_entities: Mapping[int, int] | None = None,
) -> tuple[float | None, float | None]:
    """Correct-acceptance rate and golden-hit rate among acceptances.

    The first element counts acceptances whose matched cached query shares
    the current query's entity; the second counts acceptances whose returned
    documents contain a golden document. Both are None when nothing was
    accepted. Passing ``query_entities`` re-resolves the matched query's
    entity from ids instead of trusting the recorded one.
    """
    accepts = [r for r in rows if r.accepted]
    if not accepts:
        return None, None
    if query_entities is not None:
        correct = sum(
            1 for r in accepts if query_entities.get(r.matched_query_id) == r.entity_id
        )
    else:
        correct = sum(1 for r in accepts if r.matched_entity_id == r.entity_id)
    golden = sum(1 for r in accepts if r.golden_hit)
    return correct / len(accepts), golden / len(accepts)


def latency_identity_gap(report: MetricsReport) -> float:
    """|avg - (dar * l@da + (1 - dar) * l@dr)|, the accounting residual."""
    da = report.l_at_da or 0.0
    dr = report.l_at_dr or 0.0
    return abs(report.avg_latency_s - (report.dar * da + (1.0 - report.dar) * dr))


# ------------------------------------------------------------------ baselines


class FullOnlyRetriever(BaseEstimator):
    """Every query goes straight to full-database retrieval on the cloud."""

    def __init__(self, k: int = 10, seed: int = 0, latency_model: LatencyModel | None = None):
        self.k = k
        self.seed = seed
        self.latency_model = latency_model

    def fit(self, X: np.ndarray, doc_ids: np.ndarray | None = None) -> "FullOnlyRetriever":
        X = check_matrix(X, normalized=True)
        self.dim_ = int(X.shape[1])
        self.flat_ = FlatIndex().fit(X, doc_ids)
        self.latency_model_ = self.latency_model or LatencyModel(seed=self.seed)
        self.backend_ = FullRetrievalBackend(self.flat_, self.latency_model_)
        self._ordinal = 0
        return self

    def retrieve(self, query_id: int, q: np.ndarray) -> RetrievalOutcome:
        check_fitted(self, "flat_")
        del query_id
        rng = self.latency_model_.stream(self._ordinal)
        self._ordinal += 1
        hits, cloud_s = self.backend_.full_retrieve(q, self.k, rng)
        return RetrievalOutcome(
            docs=tuple(hits),
            accepted=False,
            matched_query=None,
            latency=LatencyBreakdown.of(0.0, cloud_s),
        )


class ReuseRetriever(BaseEstimator):
    """Semantic-threshold reuse of cached results.

    An edge-side scan looks for a cached query whose embedding similarity to
    the current query reaches ``threshold``; if found, that entry's document
    list is returned (re-ranked against the current query), otherwise the
    query falls through to full retrieval and is cached. One representative
    of the reuse family: acceleration only triggers on near-identical
    queries.
    """

    def __init__(
        self,
        k: int = 10,
        threshold: float = 0.95,
        h_max: int = 5000,
        seed: int = 0,
        latency_model: LatencyModel | None = None,
    ):
        self.k = k
        self.threshold = threshold
        self.h_max = h_max
        self.seed = seed
        self.latency_model = latency_model

    def fit(self, X: np.ndarray, doc_ids: np.ndarray | None = None) -> "ReuseRetriever":
        if not (0.0 <= self.threshold <= 1.0):
            raise ConfigError("threshold must be in [0, 1]")
        X = check_matrix(X, normalized=True)
        if doc_ids is None:
            doc_ids = np.arange(X.shape[0], dtype=np.int64)
        else:
            doc_ids = np.asarray(doc_ids, dtype=np.int64)
        self.dim_ = int(X.shape[1])
        self.flat_ = FlatIndex().fit(X, doc_ids)
        self.latency_model_ = self.latency_model or LatencyModel(seed=self.seed)
        self.backend_ = FullRetrievalBackend(self.flat_, self.latency_model_)
        self.cache_ = QueryCache(self.h_max, self.dim_)
        self._vectors = X
        self._row_of = {int(d): i for i, d in enumerate(doc_ids)}
        self._ordinal = 0
        return self

    def retrieve(self, query_id: int, q: np.ndarray) -> RetrievalOutcome:
        check_fitted(self, "flat_")
        q = check_vector(q, dim=self.dim_)
        rng = self.latency_model_.stream(self._ordinal)
        self._ordinal += 1

        t0 = time.perf_counter()
        best = self.cache_.nearest_cached_query(q)
        elapsed = time.perf_counter() - t0
        edge_s = self.latency_model_.sample_stage_latency(
            "edge", rng, n_docs=len(self.cache_), kind="reuse", measured_seconds=elapsed
        )

        if best is not None and best[1] >= self.threshold:
            matched_qid = best[0]
            doc_ids = self.cache_.entry_docs(matched_qid) or ()
            embs = np.stack([self.cache_.doc_embedding(d) for d in doc_ids])
            scores = similarity_batch(embs, q)
            hits = rank_hits(np.asarray(doc_ids, dtype=np.int64), scores, self.k)
            return RetrievalOutcome(
                docs=tuple(hits),
                accepted=True,
                matched_query=matched_qid,
                latency=LatencyBreakdown.of(edge_s, 0.0),
            )

        hits, cloud_s = self.backend_.full_retrieve(q, self.k, rng)
        ids = [h.doc_id for h in hits]
        evicted = self.cache_.insert(query_id, q, ids, self._vectors[[self._row_of[d] for d in ids]])
        return RetrievalOutcome(
            docs=tuple(hits),
            accepted=False,
            matched_query=None,
            latency=LatencyBreakdown.of(edge_s, cloud_s),
            evictions=tuple(evicted),
        )


def make_retriever(
    method: str,
    k: int = 10,
    tau: float = 0.2,
    h_max: int = 5000,
    n_buckets: int = 256,
    n_probe: int = 8,
    subset_fraction: float = 1.0,
    seed: int = 42,
    reuse_threshold: float = 0.95,
    fuzzy_validation: bool = True,
    fuzzy_enhance: bool = True,
    latency_model: LatencyModel | None = None,
):
    """Build the (unfitted) retriever for a benchmark method name."""
    if method == METHOD_FULL:
        return FullOnlyRetriever(k=k, seed=seed, latency_model=latency_model)
    if method == METHOD_REUSE:
        return ReuseRetriever(
            k=k, threshold=reuse_threshold, h_max=h_max, seed=seed, latency_model=latency_model
        )
    if method == METHOD_HAS:
        return SpeculativeRetriever(
            k=k,
            tau=tau,
            h_max=h_max,
            n_buckets=n_buckets,
            n_probe=n_probe,
            subset_fraction=subset_fraction,
            seed=seed,
            fuzzy_validation=fuzzy_validation,
            fuzzy_enhance=fuzzy_enhance,
            latency_model=latency_model,
        )
    raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")


# -------------------------------------------------------------------- reports


def report_to_dict(report: MetricsReport, include_trace: bool = True) -> dict:
    out = {f: getattr(report, f) for f in AGGREGATE_FIELDS}
    out["config"] = report.config
    if include_trace and report.trace is not None:
        out["trace"] = [asdict(r) for r in report.trace]
    return out


def emit_report(report: MetricsReport, path: str, fmt: str = "json", include_trace: bool = True) -> None:
    """Write a report as JSON (aggregates + optional trace) or trace CSV."""
    if fmt not in ("json", "csv"):
        raise ConfigError(f"unknown report format {fmt!r}")
    try:
        if fmt == "json":
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(report_to_dict(report, include_trace), fh, indent=2)
                fh.write("\n")
        else:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(TRACE_FIELDS)
                for r in report.trace or []:
                    writer.writerow([_csv_cell(getattr(r, f)) for f in TRACE_FIELDS])
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc}") from exc


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_report(path: str) -> MetricsReport:
    """Parse a JSON report back into a :class:`MetricsReport`."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    trace = None
    if "trace" in data:
        trace = [TraceRow(**row) for row in data["trace"]]
    return MetricsReport(
        n_queries=data["n_queries"],
        avg_latency_s=data["avg_latency_s"],
        doc_hit_rate=data["doc_hit_rate"],
        dar=data["dar"],
        car=data["car"],
        hit_rate_at_accept=data["hit_rate_at_accept"],
        l_at_da=data["l_at_da"],
        l_at_dr=data["l_at_dr"],
        cache_mem_bytes=data["cache_mem_bytes"],
        config=data.get("config", {}),
        trace=trace,
    )


def load_trace_csv(path: str) -> list[TraceRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                TraceRow(
                    ordinal=int(rec["ordinal"]),
                    query_id=int(rec["query_id"]),
                    entity_id=int(rec["entity_id"]),
                    attr_id=int(rec["attr_id"]),
                    accepted=rec["accepted"] == "true",
                    matched_query_id=int(rec["matched_query_id"]) if rec["matched_query_id"] else None,
                    matched_entity_id=int(rec["matched_entity_id"]) if rec["matched_entity_id"] else None,
                    golden_hit=rec["golden_hit"] == "true",
                    n_docs=int(rec["n_docs"]),
                    n_evicted=int(rec["n_evicted"]),
                    edge_seconds=float(rec["edge_seconds"]),
                    cloud_seconds=float(rec["cloud_seconds"]),
                    total_seconds=float(rec["total_seconds"]),
                )
            )
    return rows
