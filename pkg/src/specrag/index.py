"""Exact flat top-k search and bucketed (IVF-style) approximate search.

Both index kinds follow the sklearn estimator convention: constructor
arguments are stored verbatim, ``fit`` ingests the corpus and creates
trailing-underscore attributes, and searches never mutate fitted state, so
fitted indices are safe for concurrent readers.

Rankings are deterministic end to end: scores are accumulated in float64 and
ties are broken by ascending document id.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator

from .core import normalize, seeded_rng, similarity_batch
from .errors import BuildError, DimError
from .validation import check_fitted, check_matrix, check_vector


class Hit(NamedTuple):
    doc_id: int
    score: float


def rank_hits(doc_ids: np.ndarray, scores: np.ndarray, k: int) -> list[Hit]:
    """Top-``k`` hits by descending score, ties broken by ascending doc id."""
    if len(doc_ids) == 0 or k <= 0:
        return []
    order = np.lexsort((doc_ids, -scores))[:k]
    return [Hit(int(doc_ids[i]), float(scores[i])) for i in order]


class FlatIndex(BaseEstimator):
    """Exhaustive inner-product search over the whole loaded corpus.

    Serves both as the full-database retriever and as the exactness oracle
    that approximate searches are checked against.
    """

    def fit(self, X: np.ndarray, doc_ids: np.ndarray | None = None) -> "FlatIndex":
        X = check_matrix(X, normalized=True)
        if doc_ids is None:
            doc_ids = np.arange(X.shape[0], dtype=np.int64)
        else:
            doc_ids = np.asarray(doc_ids, dtype=np.int64)
            if doc_ids.shape[0] != X.shape[0]:
                raise BuildError("doc_ids length does not match X")
            if len(np.unique(doc_ids)) != len(doc_ids):
                raise BuildError("duplicate doc ids")
        self.vectors_ = X
        self.doc_ids_ = doc_ids
        self.dim_ = int(X.shape[1]) if X.ndim == 2 else 0
        return self

    @property
    def n_docs(self) -> int:
        check_fitted(self, "vectors_")
        return int(self.vectors_.shape[0])

    def search(self, q: np.ndarray, k: int) -> list[Hit]:
        """Exact top-``k`` documents for query embedding ``q``."""
        check_fitted(self, "vectors_")
        if k < 1:
            raise ValueError("k must be >= 1")
        if self.n_docs == 0:
            return []
        q = check_vector(q, dim=self.dim_)
        scores = similarity_batch(self.vectors_, q)
        return rank_hits(self.doc_ids_, scores, k)


class IvfIndex(BaseEstimator):
    """Bucketed approximate search over a (possibly subsetted) corpus.

    ``fit`` partitions the loaded documents into ``n_buckets`` via Lloyd
    k-means (fixed iteration count, k-means++ style seeding, centroids kept
    as normalized means). Searches score only the documents inside the
    ``n_probe`` buckets whose centroids are nearest the query, so recall is
    traded for scan volume.

    ``subset_fraction`` < 1 loads only a deterministic sample of the corpus:
    the prefix of a seeded shuffle of the row order. Empty buckets are kept
    as-is; probing one contributes no candidates.
    """

    def __init__(
        self,
        n_buckets: int = 256,
        subset_fraction: float = 1.0,
        n_iters: int = 10,
        seed: int = 0,
    ):
        self.n_buckets = n_buckets
        self.subset_fraction = subset_fraction
        self.n_iters = n_iters
        self.seed = seed

    def fit(self, X: np.ndarray, doc_ids: np.ndarray | None = None) -> "IvfIndex":
        X = check_matrix(X, normalized=True)
        if doc_ids is None:
            doc_ids = np.arange(X.shape[0], dtype=np.int64)
        else:
            doc_ids = np.asarray(doc_ids, dtype=np.int64)
        if self.n_buckets < 1:
            raise BuildError("n_buckets must be >= 1")
        if not (0.0 < self.subset_fraction <= 1.0):
            raise BuildError("subset_fraction must be in (0, 1]")

        rng = seeded_rng(self.seed)
        n_total = X.shape[0]
        n_loaded = int(np.ceil(self.subset_fraction * n_total))
        perm = rng.permutation(n_total)[:n_loaded]
        if self.n_buckets > n_loaded:
            raise BuildError(
                f"n_buckets={self.n_buckets} exceeds {n_loaded} loaded docs"
            )
        sub_X = X[perm]
        sub_ids = doc_ids[perm]

        centroids = self._kmeans_pp_init(sub_X, rng)
        assign = self._assign(sub_X, centroids)
        for _ in range(self.n_iters):
            centroids = self._update(sub_X, centroids, assign)
            assign = self._assign(sub_X, centroids)

        self.centroids_ = centroids
        self.bucket_rows_ = [np.flatnonzero(assign == b) for b in range(self.n_buckets)]
        self.vectors_ = sub_X
        self.doc_ids_ = sub_ids
        self.dim_ = int(X.shape[1])
        return self

    def _kmeans_pp_init(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = X.shape[0]
        centroids = np.empty((self.n_buckets, X.shape[1]), dtype=np.float64)
        first = int(rng.integers(n))
        centroids[0] = X[first]
        # squared Euclidean distance to the nearest chosen centroid; on unit
        # vectors this is 2 - 2*cos
        d2 = np.maximum(2.0 - 2.0 * similarity_batch(X, centroids[0]), 0.0)
        for c in range(1, self.n_buckets):
            total = float(d2.sum())
            if total <= 0.0:
                idx = int(rng.integers(n))
            else:
                idx = int(rng.choice(n, p=d2 / total))
            centroids[c] = X[idx]
            d2 = np.minimum(d2, np.maximum(2.0 - 2.0 * similarity_batch(X, centroids[c]), 0.0))
        return centroids

    def _assign(self, X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
        # max inner product == nearest centroid for unit-norm centroids;
        # argmax takes the lowest bucket index on ties
        sims = X @ centroids.T
        return np.argmax(sims, axis=1)

    def _update(self, X: np.ndarray, centroids: np.ndarray, assign: np.ndarray) -> np.ndarray:
        out = centroids.copy()  # empty buckets keep their old centroid
        for b in range(self.n_buckets):
            rows = np.flatnonzero(assign == b)
            if len(rows):
                mean = X[rows].mean(axis=0)
                norm = np.linalg.norm(mean)
                if norm > 1e-12:
                    out[b] = mean / norm
        return out

    @property
    def n_loaded(self) -> int:
        check_fitted(self, "vectors_")
        return int(self.vectors_.shape[0])

    def probe_order(self, q: np.ndarray) -> np.ndarray:
        """Bucket indices by descending centroid similarity, id tie-break."""
        check_fitted(self, "vectors_")
        q = check_vector(q, dim=self.dim_)
        sims = similarity_batch(self.centroids_, q)
        return np.lexsort((np.arange(self.n_buckets), -sims))

    def search_counted(self, q: np.ndarray, k: int, n_probe: int) -> tuple[list[Hit], int]:
        """Like :meth:`search` but also reports how many docs were scored."""
        check_fitted(self, "vectors_")
        if not (1 <= n_probe <= self.n_buckets):
            raise ValueError(f"n_probe must be in [1, {self.n_buckets}]")
        if k < 1:
            raise ValueError("k must be >= 1")
        probes = self.probe_order(q)[:n_probe]
        rows = np.concatenate([self.bucket_rows_[b] for b in probes]) if len(probes) else np.empty(0, np.int64)
        if len(rows) == 0:
            return [], 0
        q64 = check_vector(q, dim=self.dim_)
        scores = similarity_batch(self.vectors_[rows], q64)
        return rank_hits(self.doc_ids_[rows], scores, k), int(len(rows))

    def search(self, q: np.ndarray, k: int, n_probe: int) -> list[Hit]:
        """Exact top-``k`` restricted to the ``n_probe`` nearest buckets."""
        return self.search_counted(q, k, n_probe)[0]
