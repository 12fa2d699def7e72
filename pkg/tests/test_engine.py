import numpy as np
import pytest

from specrag.core import seeded_rng
from specrag.engine import (
    HomologyScoreTable,
    PROV_BOTH,
    PROV_CACHE,
    PROV_FUZZY,
    SpeculativeRetriever,
)
from specrag.errors import ConfigError, NotReadyError
from specrag.index import FlatIndex
from specrag.workload import GenConfig, gen_corpus, gen_queries

CFG = GenConfig(n_entities=15, docs_per_entity=8, n_queries=120, seed=11)


@pytest.fixture(scope="module")
def corpus():
    docs, profiles = gen_corpus(CFG)
    X = np.stack([d.embedding for d in docs])
    ids = np.array([d.doc_id for d in docs], dtype=np.int64)
    queries = gen_queries(CFG, profiles)
    return X, ids, queries


def make_engine(X, ids, **kw):
    params = dict(k=10, tau=0.2, h_max=50, n_buckets=8, n_probe=3, seed=5)
    params.update(kw)
    return SpeculativeRetriever(**params).fit(X, ids)


class TestBuildDraft:
    def test_cold_cache_draft_is_fuzzy_only(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        draft = engine.build_draft(queries[0].embedding)
        assert draft.cache_hits == ()
        assert draft.hits == draft.fuzzy_hits[: len(draft.hits)]
        assert all(p == PROV_FUZZY for p in draft.provenance.values())

    def test_doc_in_both_channels_deduplicated(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids, subset_fraction=1.0, n_probe=8)
        q = queries[0]
        engine.retrieve(q.query_id, q.embedding)  # reject -> caches full top-k
        draft = engine.build_draft(q.embedding)
        seen = [h.doc_id for h in draft.hits]
        assert len(seen) == len(set(seen))
        assert PROV_BOTH in draft.provenance.values()

    def test_draft_equals_flat_over_union_pool(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids, seed=9)
        for q in queries[:30]:
            engine.retrieve(q.query_id, q.embedding)
        row_of = {int(d): i for i, d in enumerate(ids)}
        for q in queries[30:50]:
            draft = engine.build_draft(q.embedding)
            union_ids = sorted(
                {h.doc_id for h in draft.cache_hits} | {h.doc_id for h in draft.fuzzy_hits}
            )
            pool = FlatIndex().fit(
                X[[row_of[d] for d in union_ids]], np.array(union_ids, dtype=np.int64)
            )
            assert draft.hits == tuple(pool.search(q.embedding, engine.k))

    def test_draft_never_exceeds_k(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        for q in queries[:40]:
            out = engine.retrieve(q.query_id, q.embedding)
            assert len(out.docs) <= engine.k
            assert out.draft is not None and len(out.draft.hits) <= engine.k


class TestScoreHomology:
    def test_full_overlap_scores_one(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        q = queries[0]
        engine.retrieve(q.query_id, q.embedding)  # cold reject, caches top-k
        draft = engine.build_draft(q.embedding)
        table = engine.score_homology(draft)
        assert table.score(q.query_id) == 1.0

    def test_disjoint_cache_yields_empty_table(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        draft = engine.build_draft(queries[0].embedding)
        assert engine.score_homology(draft).freq == {}

    def test_matches_pairwise_intersection_oracle(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids, h_max=200)
        for q in queries[:50]:
            engine.retrieve(q.query_id, q.embedding)
        cached = {e.query_id: set(e.doc_ids) for e in engine.cache_.entries()}
        for q in queries[50:90]:
            draft = engine.build_draft(q.embedding)
            table = engine.score_homology(draft)
            draft_ids = {h.doc_id for h in draft.hits}
            oracle = {
                qid: len(draft_ids & docs) / engine.k
                for qid, docs in cached.items()
                if draft_ids & docs
            }
            assert table.scores() == oracle

    def test_thin_draft_divides_by_configured_k(self, corpus):
        X, ids, _ = corpus
        engine = make_engine(X, ids)
        rng = seeded_rng(1)
        q = rng.standard_normal(X.shape[1])
        q /= np.linalg.norm(q)
        hits = engine.flat_.search(q, 4)
        engine.cache_.insert(
            777, q, [h.doc_id for h in hits], X[[int(h.doc_id) for h in hits]]
        )
        table = HomologyScoreTable({777: 4}, engine.k)
        assert table.score(777) == pytest.approx(4 / 10)


class TestValidate:
    def test_strictly_above_threshold_accepts(self, corpus):
        X, ids, _ = corpus
        engine = make_engine(X, ids)
        table = HomologyScoreTable({3: 3}, 10)
        verdict = engine.validate(table, tau=0.2)
        assert verdict.accepted and verdict.matched_query == 3
        assert verdict.score == pytest.approx(0.3)

    def test_boundary_rejects(self, corpus):
        X, ids, _ = corpus
        engine = make_engine(X, ids)
        verdict = engine.validate(HomologyScoreTable({3: 2}, 10), tau=0.2)
        assert not verdict.accepted

    def test_tau_one_always_rejects(self, corpus):
        X, ids, _ = corpus
        engine = make_engine(X, ids)
        verdict = engine.validate(HomologyScoreTable({3: 10}, 10), tau=1.0)
        assert not verdict.accepted

    def test_tie_goes_to_lowest_query_id(self, corpus):
        X, ids, _ = corpus
        engine = make_engine(X, ids)
        verdict = engine.validate(HomologyScoreTable({9: 5, 4: 5, 12: 4}, 10), tau=0.2)
        assert verdict.matched_query == 4

    def test_acceptance_monotone_in_tau(self):
        rng = seeded_rng(2)
        tables = [
            HomologyScoreTable({int(q): int(rng.integers(1, 11)) for q in rng.choice(50, 5)}, 10)
            for _ in range(100)
        ]
        engine = SpeculativeRetriever()
        for t1, t2 in ((0.1, 0.3), (0.2, 0.8), (0.0, 0.5)):
            accept_lo = {i for i, t in enumerate(tables) if engine.validate(t, t1).accepted}
            accept_hi = {i for i, t in enumerate(tables) if engine.validate(t, t2).accepted}
            assert accept_hi <= accept_lo


class TestRetrieve:
    def test_cold_start_rejects_and_returns_flat_result(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        q = queries[0]
        out = engine.retrieve(q.query_id, q.embedding)
        assert not out.accepted
        assert list(out.docs) == engine.flat_.search(q.embedding, 10)
        assert out.latency.cloud_seconds > 0

    def test_identical_query_twice_accepts_with_full_score(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids, subset_fraction=1.0)
        q = queries[0]
        first = engine.retrieve(q.query_id, q.embedding)
        second = engine.retrieve(q.query_id + 1_000, q.embedding)
        assert not first.accepted and second.accepted
        assert second.matched_query == q.query_id
        assert second.validation.score == 1.0

    def test_tau_one_stream_equals_flat_everywhere(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids, tau=1.0)
        for q in queries[:60]:
            out = engine.retrieve(q.query_id, q.embedding)
            assert not out.accepted
            assert list(out.docs) == engine.flat_.search(q.embedding, 10)

    def test_cache_mutates_iff_rejected(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        seqs = []
        for q in queries[:80]:
            before = len(engine.cache_)
            evicted_before = engine.cache_._next_seq
            out = engine.retrieve(q.query_id, q.embedding)
            grew = engine.cache_._next_seq == evicted_before + 1
            assert grew == (not out.accepted)
            if out.accepted:
                assert len(engine.cache_) == before
            seqs.append(out.accepted)
        assert any(seqs) and not all(seqs)

    def test_accepted_path_charges_no_cloud(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        for q in queries[:60]:
            out = engine.retrieve(q.query_id, q.embedding)
            if out.accepted:
                assert out.latency.cloud_seconds == 0.0
                assert out.latency.total_seconds == out.latency.edge_seconds

    def test_accepted_path_consumes_single_net_draw(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        model = engine.latency_model_
        for q in queries[:60]:
            before = model.net_draws
            out = engine.retrieve(q.query_id, q.embedding)
            assert model.net_draws - before == (1 if out.accepted else 2)

    def test_acceptance_soundness_against_cached_docs(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        for q in queries[:100]:
            out = engine.retrieve(q.query_id, q.embedding)
            if out.accepted:
                cached = engine.cache_.entry_docs(out.matched_query)
                assert cached is not None
                draft_ids = {h.doc_id for h in out.draft.hits}
                overlap = len(draft_ids & set(cached)) / engine.k
                assert overlap > engine.tau
                assert overlap == out.validation.score

    def test_score_bounds_and_integrality(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        for q in queries[:60]:
            out = engine.retrieve(q.query_id, q.embedding)
            for s in out.validation.table.scores().values():
                assert 0.0 <= s <= 1.0
                assert (s * engine.k) == int(round(s * engine.k))


class TestAblationFlags:
    def test_validation_without_fuzzy_probes_cache_hits_only(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids, fuzzy_validation=False)
        for q in queries[:20]:
            engine.retrieve(q.query_id, q.embedding)
        q = queries[25]
        draft = engine.build_draft(q.embedding)
        table = engine.score_homology(draft)
        cache_ids = {h.doc_id for h in draft.cache_hits}
        oracle = {}
        for entry in engine.cache_.entries():
            f = len(cache_ids & set(entry.doc_ids))
            if f:
                oracle[entry.query_id] = f
        assert table.freq == oracle

    def test_enhance_off_drops_fuzzy_only_docs(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids, fuzzy_enhance=False)
        saw_accept = False
        for q in queries[:80]:
            out = engine.retrieve(q.query_id, q.embedding)
            if out.accepted:
                saw_accept = True
                for h in out.docs:
                    assert out.draft.provenance[h.doc_id] != PROV_FUZZY
        assert saw_accept


class TestPrefill:
    def test_prefill_populates_without_latency_draws(self, corpus):
        X, ids, queries = corpus
        engine = make_engine(X, ids)
        before = engine.latency_model_.net_draws
        engine.prefill((q.query_id + 50_000, q.embedding) for q in queries[:10])
        assert len(engine.cache_) == 10
        assert engine.latency_model_.net_draws == before


class TestParamValidation:
    def test_bad_params_raise_config_error(self, corpus):
        X, ids, _ = corpus
        with pytest.raises(ConfigError):
            SpeculativeRetriever(k=0).fit(X, ids)
        with pytest.raises(ConfigError):
            SpeculativeRetriever(tau=1.5).fit(X, ids)
        with pytest.raises(ConfigError):
            SpeculativeRetriever(n_probe=20, n_buckets=8).fit(X, ids)

    def test_unfitted_engine_raises(self):
        with pytest.raises(NotReadyError):
            SpeculativeRetriever().retrieve(0, np.ones(4) / 2.0)

    def test_get_params_round_trip(self):
        engine = SpeculativeRetriever(k=7, tau=0.3)
        params = engine.get_params()
        assert params["k"] == 7 and params["tau"] == 0.3
        clone = SpeculativeRetriever(**params)
        assert clone.get_params() == params
