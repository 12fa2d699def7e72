"""Full-database retrieval and the simulated cloud/edge latency model.

Latency is virtual: stage costs are sampled and accumulated as numbers on a
per-query clock, never slept away (unless the demo sleep mode is switched
on), so benchmarks over large streams finish in seconds of wall time.

A stage cost is one uniform network draw from that stage's range plus a
compute term. The compute term is, by default, an analytic model that is
linear in the number of candidate documents scored, which keeps runs
bit-reproducible; a measured mode that charges observed wall time of the
actual search call exists but trades away that determinism.

Every in-flight query derives its own random sub-stream from (seed, query
ordinal), so concurrent execution cannot change what any query samples.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import substream
from .errors import ConfigError, NotReadyError
from .index import FlatIndex, Hit

# default per-document scan cost; at this rate a ~50M-document corpus costs
# on the order of a second, the regime the cloud/edge split is modeled after
DEFAULT_PER_DOC_SECONDS = 2.5e-8

EDGE_NET_RANGE = (0.01, 0.05)
CLOUD_NET_RANGE = (0.1, 0.2)


@dataclass(frozen=True)
class LatencyBreakdown:
    """Per-query virtual latency split by deployment stage."""

    edge_seconds: float
    cloud_seconds: float
    total_seconds: float

    @staticmethod
    def of(edge_seconds: float, cloud_seconds: float) -> "LatencyBreakdown":
        return LatencyBreakdown(edge_seconds, cloud_seconds, edge_seconds + cloud_seconds)


class LatencyModel:
    """Samples per-stage virtual latencies from uniform network ranges."""

    def __init__(
        self,
        edge_net: tuple[float, float] = EDGE_NET_RANGE,
        cloud_net: tuple[float, float] = CLOUD_NET_RANGE,
        per_doc_seconds: float = DEFAULT_PER_DOC_SECONDS,
        seed: int = 0,
        compute_mode: str = "model",
        sleep: bool = False,
    ):
        for name, rng in (("edge_net", edge_net), ("cloud_net", cloud_net)):
            lo, hi = rng
            if lo < 0 or hi < lo:
                raise ConfigError(f"{name} range must satisfy 0 <= lo <= hi, got {rng}")
        if compute_mode not in ("model", "measured"):
            raise ConfigError(f"unknown compute_mode {compute_mode!r}")
        self.edge_net = (float(edge_net[0]), float(edge_net[1]))
        self.cloud_net = (float(cloud_net[0]), float(cloud_net[1]))
        self.per_doc_seconds = float(per_doc_seconds)
        self.seed = int(seed)
        self.compute_mode = compute_mode
        self.sleep = sleep
        self.net_draws = 0  # audit counter: one per sampled network delay
        self._default_rng = substream(self.seed, 0xFFFF)

    def stream(self, ordinal: int) -> np.random.Generator:
        """Independent stream for the query at this position."""
        return substream(self.seed, int(ordinal))

    def compute_cost(self, kind: str, n_docs: int, k: int) -> float:
        """Modeled compute seconds for scoring ``n_docs`` candidates."""
        del kind, k  # a single per-document rate fits every index kind here
        return self.per_doc_seconds * max(0, int(n_docs))

    def sample_stage_latency(
        self,
        stage: str,
        rng: np.random.Generator | None = None,
        n_docs: int = 0,
        kind: str = "flat",
        measured_seconds: float | None = None,
    ) -> float:
        """One stage's latency: a network draw plus the stage compute cost.

        Consumes exactly one draw from ``rng``. ``measured_seconds`` replaces
        the modeled compute term when the model runs in measured mode.
        """
        if stage == "edge":
            lo, hi = self.edge_net
        elif stage == "cloud":
            lo, hi = self.cloud_net
        else:
            raise ValueError(f"unknown stage {stage!r}")
        if rng is None:
            rng = self._default_rng
        net = float(rng.uniform(lo, hi))
        self.net_draws += 1
        if self.compute_mode == "measured" and measured_seconds is not None:
            compute = float(measured_seconds)
        else:
            compute = self.compute_cost(kind, n_docs, 0)
        total = net + compute
        if self.sleep:
            time.sleep(total)
        return total


class FullRetrievalBackend:
    """Cloud-hosted exact retrieval over the full corpus."""

    def __init__(self, index: FlatIndex | None = None, latency_model: LatencyModel | None = None):
        self.index = index
        self.latency_model = latency_model or LatencyModel()

    def full_retrieve(
        self,
        q: np.ndarray,
        k: int,
        rng: np.random.Generator | None = None,
    ) -> tuple[list[Hit], float]:
        """Exact top-``k`` plus the cloud-stage latency charged for it."""
        if self.index is None or getattr(self.index, "vectors_", None) is None:
            raise NotReadyError("full corpus is not loaded")
        t0 = time.perf_counter()
        hits = self.index.search(q, k)
        elapsed = time.perf_counter() - t0
        latency = self.latency_model.sample_stage_latency(
            "cloud", rng, n_docs=self.index.n_docs, kind="flat", measured_seconds=elapsed
        )
        return hits, latency
