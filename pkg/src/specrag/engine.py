"""Two-channel speculative retrieval with cached-query re-identification.

Per query the engine: (1) pulls top-k candidates from the cache channel
(documents of recently cached queries, searched exactly) and from the fuzzy
channel (an aggressively configured bucketed index); (2) merges and re-ranks
them into a draft; (3) maps each draft document through the inverted
postings back to cached queries, counting how often each cached query's
result list overlaps the draft; (4) accepts the draft when some cached
query's overlap fraction strictly exceeds the threshold, otherwise falls
back to full-database retrieval and caches that result.

Acceptance hinges on overlap of retrieval results rather than on query
embedding similarity: queries about the same entity recall overlapping
documents even when they target different attributes, so a high overlap
re-identifies a cached query about the same entity, and its absence rejects
the draft with confidence.

The fallback path is the only one that mutates the cache, and it holds the
engine's mutation lock, so concurrent retrieves observe a cache equal to
some prefix of completed insertions.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .backend import FullRetrievalBackend, LatencyBreakdown, LatencyModel
from .cache import QueryCache
from .errors import ConfigError
from .index import FlatIndex, Hit, IvfIndex, rank_hits
from .validation import check_fitted, check_matrix, check_vector

PROV_CACHE = "cache"
PROV_FUZZY = "fuzzy"
PROV_BOTH = "both"


@dataclass(frozen=True)
class Draft:
    """Merged candidate set pending validation."""

    hits: tuple[Hit, ...]
    provenance: dict[int, str]
    cache_hits: tuple[Hit, ...]
    fuzzy_hits: tuple[Hit, ...]
    scanned: int = 0  # candidate docs scored across both channels


@dataclass(frozen=True)
class HomologyScoreTable:
    """Overlap counts between a draft and every cached query it touches.

    ``freq[qid]`` is the number of draft documents appearing in that cached
    query's result list; the score is ``freq / k`` against the configured
    draft size, so a thin draft cannot inflate scores.
    """

    freq: dict[int, int]
    k: int

    def score(self, query_id: int) -> float:
        return self.freq.get(query_id, 0) / self.k

    def scores(self) -> dict[int, float]:
        return {q: f / self.k for q, f in self.freq.items()}

    def best(self) -> tuple[int, float] | None:
        """Highest-scoring cached query, ties broken by lowest query id."""
        if not self.freq:
            return None
        qid = min(self.freq, key=lambda q: (-self.freq[q], q))
        return qid, self.freq[qid] / self.k


@dataclass(frozen=True)
class ValidationResult:
    accepted: bool
    matched_query: int | None
    score: float | None
    table: HomologyScoreTable


@dataclass(frozen=True)
class RetrievalOutcome:
    """What one retrieve call returned and what it cost."""

    docs: tuple[Hit, ...]
    accepted: bool
    matched_query: int | None
    latency: LatencyBreakdown
    evictions: tuple[int, ...] = ()
    validation: ValidationResult | None = None
    draft: Draft | None = field(default=None, repr=False)


class SpeculativeRetriever(BaseEstimator):
    """Draft-then-validate retriever over a fitted corpus.

    Parameters
    ----------
    k : draft and result size.
    tau : acceptance threshold on the overlap fraction, strict inequality.
    h_max : cache capacity in entries (FIFO eviction).
    n_buckets, n_probe, subset_fraction : fuzzy-channel configuration.
    seed : drives index construction and the latency model.
    fuzzy_validation : score the merged draft (default) instead of the
        cache-channel candidates alone. Disabling reproduces the ablation
        where noisy cache documents inflate overlap counts.
    fuzzy_enhance : keep fuzzy-sourced documents in accepted results.
    latency_model : optional pre-built :class:`LatencyModel`.
    """

    def __init__(
        self,
        k: int = 10,
        tau: float = 0.2,
        h_max: int = 5000,
        n_buckets: int = 256,
        n_probe: int = 8,
        subset_fraction: float = 1.0,
        seed: int = 0,
        fuzzy_validation: bool = True,
        fuzzy_enhance: bool = True,
        latency_model: LatencyModel | None = None,
    ):
        self.k = k
        self.tau = tau
        self.h_max = h_max
        self.n_buckets = n_buckets
        self.n_probe = n_probe
        self.subset_fraction = subset_fraction
        self.seed = seed
        self.fuzzy_validation = fuzzy_validation
        self.fuzzy_enhance = fuzzy_enhance
        self.latency_model = latency_model

    # ----------------------------------------------------------------- fitting

    def _check_params(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not (0.0 <= self.tau <= 1.0):
            raise ConfigError("tau must be in [0, 1]")
        if self.h_max < 1:
            raise ConfigError("h_max must be >= 1")
        if not (1 <= self.n_probe <= self.n_buckets):
            raise ConfigError("need 1 <= n_probe <= n_buckets")

    def fit(self, X: np.ndarray, doc_ids: np.ndarray | None = None) -> "SpeculativeRetriever":
        """Index the corpus into both channels and reset the cache."""
        self._check_params()
        X = check_matrix(X, normalized=True)
        if doc_ids is None:
            doc_ids = np.arange(X.shape[0], dtype=np.int64)
        else:
            doc_ids = np.asarray(doc_ids, dtype=np.int64)
        self.dim_ = int(X.shape[1])
        self.flat_ = FlatIndex().fit(X, doc_ids)
        self.ivf_ = IvfIndex(
            n_buckets=self.n_buckets,
            subset_fraction=self.subset_fraction,
            seed=self.seed,
        ).fit(X, doc_ids)
        self.latency_model_ = self.latency_model or LatencyModel(seed=self.seed)
        self.backend_ = FullRetrievalBackend(self.flat_, self.latency_model_)
        self.cache_ = QueryCache(self.h_max, self.dim_)
        self._vectors = X
        self._row_of = {int(d): i for i, d in enumerate(doc_ids)}
        self._ordinal = 0
        self._lock = threading.Lock()
        return self

    # ------------------------------------------------------------ draft stage

    def build_draft(self, q: np.ndarray) -> Draft:
        """Two-channel fast retrieval merged into a ranked, deduplicated draft."""
        check_fitted(self, "flat_")
        q = check_vector(q, dim=self.dim_)
        pool_scanned = self.cache_.pool_size
        cache_hits = tuple(self.cache_.topk(q, self.k))
        fuzzy_raw, fuzzy_scanned = self.ivf_.search_counted(q, self.k, self.n_probe)
        fuzzy_hits = tuple(fuzzy_raw)
        provenance: dict[int, str] = {}
        scores: dict[int, float] = {}
        for h in cache_hits:
            provenance[h.doc_id] = PROV_CACHE
            scores[h.doc_id] = h.score
        for h in fuzzy_hits:
            if h.doc_id in provenance:
                provenance[h.doc_id] = PROV_BOTH
            else:
                provenance[h.doc_id] = PROV_FUZZY
                scores[h.doc_id] = h.score
        ids = np.fromiter(scores.keys(), dtype=np.int64, count=len(scores))
        vals = np.fromiter(scores.values(), dtype=np.float64, count=len(scores))
        merged = tuple(rank_hits(ids, vals, self.k))
        kept = {h.doc_id for h in merged}
        return Draft(
            hits=merged,
            provenance={d: p for d, p in provenance.items() if d in kept},
            cache_hits=cache_hits,
            fuzzy_hits=fuzzy_hits,
            scanned=pool_scanned + self.ivf_.n_buckets + fuzzy_scanned,
        )

    # ------------------------------------------------------- validation stage

    def score_homology(self, draft: Draft) -> HomologyScoreTable:
        """Count draft documents per cached query via the inverted postings."""
        check_fitted(self, "cache_")
        probe = draft.hits if self.fuzzy_validation else draft.cache_hits
        freq: dict[int, int] = {}
        for h in probe:
            for qid in self.cache_.lookup(h.doc_id):
                freq[qid] = freq.get(qid, 0) + 1
        return HomologyScoreTable(freq, self.k)

    def validate(self, table: HomologyScoreTable, tau: float | None = None) -> ValidationResult:
        """Accept iff the best overlap fraction strictly exceeds ``tau``."""
        tau = self.tau if tau is None else tau
        best = table.best()
        if best is not None and best[1] > tau:
            return ValidationResult(True, best[0], best[1], table)
        return ValidationResult(False, None, None, table)

    # ---------------------------------------------------------------- retrieve

    def _accepted_docs(self, draft: Draft) -> tuple[Hit, ...]:
        if self.fuzzy_enhance:
            return draft.hits
        return tuple(h for h in draft.hits if draft.provenance[h.doc_id] != PROV_FUZZY)

    def retrieve(self, query_id: int, q: np.ndarray) -> RetrievalOutcome:
        """Run the full draft / validate / fallback pipeline for one query."""
        check_fitted(self, "flat_")
        q = check_vector(q, dim=self.dim_)
        with self._lock:
            ordinal = self._ordinal
            self._ordinal += 1
        rng = self.latency_model_.stream(ordinal)

        t0 = time.perf_counter()
        draft = self.build_draft(q)
        table = self.score_homology(draft)
        verdict = self.validate(table)
        edge_elapsed = time.perf_counter() - t0
        edge_s = self.latency_model_.sample_stage_latency(
            "edge", rng, n_docs=draft.scanned, kind="edge", measured_seconds=edge_elapsed
        )

        if verdict.accepted:
            return RetrievalOutcome(
                docs=self._accepted_docs(draft),
                accepted=True,
                matched_query=verdict.matched_query,
                latency=LatencyBreakdown.of(edge_s, 0.0),
                validation=verdict,
                draft=draft,
            )

        hits, cloud_s = self.backend_.full_retrieve(q, self.k, rng)
        with self._lock:
            evicted = self._cache_insert(query_id, q, hits)
        return RetrievalOutcome(
            docs=tuple(hits),
            accepted=False,
            matched_query=None,
            latency=LatencyBreakdown.of(edge_s, cloud_s),
            evictions=tuple(evicted),
            validation=verdict,
            draft=draft,
        )

    def _cache_insert(self, query_id: int, q: np.ndarray, hits: list[Hit]) -> list[int]:
        ids = [h.doc_id for h in hits]
        embs = self._vectors[[self._row_of[d] for d in ids]]
        return self.cache_.insert(query_id, q, ids, embs)

    def prefill(self, queries) -> None:
        """Seed the cache with full-retrieval results, outside any clock.

        ``queries`` yields (query_id, embedding) pairs. Used to warm the
        cache before measured runs, e.g. for cache-channel-only ablations
        that would otherwise lock onto the first cached entry.
        """
        check_fitted(self, "flat_")
        for qid, emb in queries:
            emb = check_vector(emb, dim=self.dim_)
            hits = self.flat_.search(emb, self.k)
            with self._lock:
                self._cache_insert(qid, emb, hits)
