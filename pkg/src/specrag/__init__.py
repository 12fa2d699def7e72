"""Speculative two-channel retrieval with cached-query homology validation."""

from .backend import FullRetrievalBackend, LatencyBreakdown, LatencyModel
from .bench import (
    FullOnlyRetriever,
    MetricsReport,
    ReuseRetriever,
    TraceRow,
    compute_car,
    emit_report,
    load_report,
    make_retriever,
    run_benchmark,
)
from .cache import CacheEntry, QueryCache
from .core import inner_product, normalize, seeded_rng
from .engine import (
    Draft,
    HomologyScoreTable,
    RetrievalOutcome,
    SpeculativeRetriever,
    ValidationResult,
)
from .errors import (
    BuildError,
    ConfigError,
    DegenerateVectorError,
    DimError,
    FormatError,
    IoError,
    NotReadyError,
    RetrievalError,
    SpecragError,
)
from .index import FlatIndex, Hit, IvfIndex
from .workload import (
    EntityProfile,
    GenConfig,
    LabeledDoc,
    LabeledQuery,
    gen_corpus,
    gen_queries,
    homology_relation,
    is_golden,
    is_quasi_homologous,
    reference_config,
)

__version__ = "0.1.0"

__all__ = [
    "BuildError",
    "CacheEntry",
    "ConfigError",
    "DegenerateVectorError",
    "DimError",
    "Draft",
    "EntityProfile",
    "FlatIndex",
    "FormatError",
    "FullOnlyRetriever",
    "FullRetrievalBackend",
    "GenConfig",
    "Hit",
    "HomologyScoreTable",
    "IoError",
    "IvfIndex",
    "LabeledDoc",
    "LabeledQuery",
    "LatencyBreakdown",
    "LatencyModel",
    "MetricsReport",
    "NotReadyError",
    "QueryCache",
    "RetrievalError",
    "RetrievalOutcome",
    "ReuseRetriever",
    "SpecragError",
    "SpeculativeRetriever",
    "TraceRow",
    "ValidationResult",
    "compute_car",
    "emit_report",
    "gen_corpus",
    "gen_queries",
    "homology_relation",
    "inner_product",
    "is_golden",
    "is_quasi_homologous",
    "load_report",
    "make_retriever",
    "normalize",
    "reference_config",
    "run_benchmark",
    "seeded_rng",
]
