import numpy as np
import pytest

from specrag.backend import (
    CLOUD_NET_RANGE,
    EDGE_NET_RANGE,
    FullRetrievalBackend,
    LatencyBreakdown,
    LatencyModel,
)
from specrag.core import seeded_rng
from specrag.errors import ConfigError, NotReadyError
from specrag.index import FlatIndex


def normalized(rng, n, dim):
    X = rng.standard_normal((n, dim))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


class TestLatencyModel:
    def test_default_ranges_match_deployment_simulation(self):
        model = LatencyModel()
        assert model.edge_net == EDGE_NET_RANGE == (0.01, 0.05)
        assert model.cloud_net == CLOUD_NET_RANGE == (0.1, 0.2)

    def test_degenerate_range_is_exact(self):
        model = LatencyModel(edge_net=(0.05, 0.05))
        assert model.sample_stage_latency("edge") == 0.05

    def test_compute_cost_added(self):
        model = LatencyModel(edge_net=(0.05, 0.05), per_doc_seconds=1e-6)
        assert model.sample_stage_latency("edge", n_docs=1000) == pytest.approx(0.05 + 1e-3)

    def test_uniform_mean_over_cloud_range(self):
        model = LatencyModel(seed=1)
        rng = model.stream(0)
        draws = [model.sample_stage_latency("cloud", rng) for _ in range(100_000)]
        assert np.mean(draws) == pytest.approx(0.15, abs=0.002)
        assert min(draws) >= 0.1 and max(draws) <= 0.2

    def test_draw_counter_increments(self):
        model = LatencyModel(seed=2)
        assert model.net_draws == 0
        model.sample_stage_latency("edge")
        model.sample_stage_latency("cloud")
        assert model.net_draws == 2

    def test_substreams_deterministic_and_independent_of_order(self):
        a = LatencyModel(seed=3)
        b = LatencyModel(seed=3)
        # sample ordinal 5 after ordinal 0 on one model, directly on the other
        a.sample_stage_latency("edge", a.stream(0))
        va = a.sample_stage_latency("edge", a.stream(5))
        vb = b.sample_stage_latency("edge", b.stream(5))
        assert va == vb

    def test_bad_ranges_rejected(self):
        with pytest.raises(ConfigError):
            LatencyModel(edge_net=(0.2, 0.1))
        with pytest.raises(ConfigError):
            LatencyModel(cloud_net=(-0.1, 0.2))
        with pytest.raises(ConfigError):
            LatencyModel(compute_mode="guess")

    def test_unknown_stage_rejected(self):
        with pytest.raises(ValueError):
            LatencyModel().sample_stage_latency("fog")


class TestLatencyBreakdown:
    def test_total_is_sum(self):
        lb = LatencyBreakdown.of(0.04, 0.15)
        assert lb.total_seconds == pytest.approx(lb.edge_seconds + lb.cloud_seconds, abs=1e-9)


class TestFullRetrievalBackend:
    def test_not_ready_without_corpus(self):
        backend = FullRetrievalBackend(None, LatencyModel())
        with pytest.raises(NotReadyError):
            backend.full_retrieve(np.ones(4) / 2.0, 3)

    def test_hits_equal_flat_oracle(self):
        rng = seeded_rng(4)
        X = normalized(rng, 200, 8)
        flat = FlatIndex().fit(X)
        backend = FullRetrievalBackend(flat, LatencyModel(seed=5))
        for _ in range(10):
            q = normalized(rng, 1, 8)[0]
            hits, _ = backend.full_retrieve(q, 10, backend.latency_model.stream(0))
            assert hits == flat.search(q, 10)

    def test_latency_within_cloud_range_plus_compute(self):
        rng = seeded_rng(6)
        X = normalized(rng, 500, 8)
        model = LatencyModel(seed=7)
        backend = FullRetrievalBackend(FlatIndex().fit(X), model)
        compute = model.compute_cost("flat", 500, 10)
        for i in range(50):
            _, latency = backend.full_retrieve(normalized(rng, 1, 8)[0], 5, model.stream(i))
            assert 0.1 <= latency <= 0.2 + compute

    def test_deterministic_given_seed(self):
        rng = seeded_rng(8)
        X = normalized(rng, 100, 8)
        q = normalized(rng, 1, 8)[0]

        def run():
            model = LatencyModel(seed=9)
            backend = FullRetrievalBackend(FlatIndex().fit(X), model)
            return [backend.full_retrieve(q, 5, model.stream(i)) for i in range(20)]

        assert run() == run()
