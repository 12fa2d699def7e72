"""FIFO query cache, pooled cache-channel documents, and inverted postings.

The cache stores (historical query, retrieved documents) pairs up to a fixed
capacity. Three views of that state are kept in lockstep:

* ``entries``: the FIFO order, which alone decides eviction.
* ``doc pool``: one embedding per distinct referenced document plus a
  reference count, searched exactly as the cache channel.
* ``inverted postings``: document id to the cached queries whose result list
  contains it, the accelerator for homology scoring.

Eviction is eager and happens inside :meth:`QueryCache.insert`, so every
invariant (capacity bound, refcount == number of referencing entries, no
orphaned postings) holds after every public call. Mutations require exclusive
access; lookups and channel search are read-only.

Duplicate query ids are accepted and treated as fresh entries: the old entry
keeps its FIFO position until evicted. Postings therefore track reference
counts per (document, query id) pair internally, although lookups expose
plain id sets.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import similarity_batch
from .errors import ConfigError
from .index import Hit, rank_hits
from .validation import check_matrix, check_vector

# accounting constants for memory_footprint(); embeddings are counted at
# their canonical 32-bit width regardless of the in-memory compute dtype
_BASE_BYTES = 128
_ID_BYTES = 8
_ENTRY_META_BYTES = 16  # query id + insertion sequence number
_DOC_META_BYTES = 16  # doc id + refcount


@dataclass(frozen=True)
class CacheEntry:
    """One cached (query, full-retrieval result) pair."""

    query_id: int
    insert_seq: int
    doc_ids: tuple[int, ...]
    slot: int  # row of the query embedding inside the cache's fixed buffer


class QueryCache:
    """Bounded FIFO cache of queries and their retrieved document lists."""

    def __init__(self, h_max: int, dim: int):
        if h_max < 1:
            raise ConfigError("h_max must be >= 1")
        if dim < 1:
            raise ConfigError("dim must be >= 1")
        self.h_max = int(h_max)
        self.dim = int(dim)
        self._entries: deque[CacheEntry] = deque()
        self._next_seq = 0
        # fixed-capacity query-embedding buffer; slot reuse follows eviction
        self._qemb = np.zeros((self.h_max, self.dim), dtype=np.float64)
        self._qids = np.full(self.h_max, -1, dtype=np.int64)
        self._free_slots = list(range(self.h_max - 1, -1, -1))
        # growable doc pool, kept dense via swap-remove
        self._pool_vecs = np.empty((0, self.dim), dtype=np.float64)
        self._pool_ids = np.empty(0, dtype=np.int64)
        self._pool_size = 0
        self._pool_row: dict[int, int] = {}
        self._refcount: dict[int, int] = {}
        self._postings: dict[int, dict[int, int]] = {}

    # ------------------------------------------------------------------ state

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def pool_size(self) -> int:
        """Number of distinct documents currently in the cache channel."""
        return self._pool_size

    def entries(self) -> Iterator[CacheEntry]:
        """Entries in FIFO order (oldest first). For inspection only."""
        return iter(self._entries)

    def refcount(self, doc_id: int) -> int:
        return self._refcount.get(int(doc_id), 0)

    # --------------------------------------------------------------- mutation

    def insert(
        self,
        query_id: int,
        query_emb: np.ndarray,
        doc_ids,
        doc_embs: np.ndarray,
    ) -> list[int]:
        """Append an entry, evicting oldest entries if over capacity.

        Returns the query ids evicted by this call, in eviction order.
        """
        doc_ids = [int(d) for d in doc_ids]
        if not doc_ids:
            raise ValueError("doc_ids must be nonempty")
        if len(set(doc_ids)) != len(doc_ids):
            raise ValueError("doc_ids must be distinct")
        query_emb = check_vector(query_emb, dim=self.dim, name="query_emb")
        doc_embs = check_matrix(doc_embs, dim=self.dim, name="doc_embs")
        if doc_embs.shape[0] != len(doc_ids):
            raise ValueError("doc_embs rows must match doc_ids")

        evicted = []
        while len(self._entries) >= self.h_max:
            evicted.append(self._evict_oldest())

        slot = self._free_slots.pop()
        self._qemb[slot] = query_emb
        self._qids[slot] = query_id
        entry = CacheEntry(int(query_id), self._next_seq, tuple(doc_ids), slot)
        self._next_seq += 1
        self._entries.append(entry)

        for d, emb in zip(doc_ids, doc_embs):
            if d in self._pool_row:
                self._refcount[d] += 1
            else:
                self._pool_add(d, emb)
                self._refcount[d] = 1
            per_query = self._postings.setdefault(d, {})
            per_query[entry.query_id] = per_query.get(entry.query_id, 0) + 1
        return evicted

    def _evict_oldest(self) -> int:
        entry = self._entries.popleft()
        self._qids[entry.slot] = -1
        self._free_slots.append(entry.slot)
        for d in entry.doc_ids:
            self._refcount[d] -= 1
            per_query = self._postings[d]
            per_query[entry.query_id] -= 1
            if per_query[entry.query_id] == 0:
                del per_query[entry.query_id]
            if not per_query:
                del self._postings[d]
            if self._refcount[d] == 0:
                del self._refcount[d]
                self._pool_remove(d)
        return entry.query_id

    def _pool_add(self, doc_id: int, emb: np.ndarray) -> None:
        if self._pool_size == self._pool_vecs.shape[0]:
            new_cap = max(64, 2 * self._pool_vecs.shape[0])
            vecs = np.empty((new_cap, self.dim), dtype=np.float64)
            vecs[: self._pool_size] = self._pool_vecs[: self._pool_size]
            ids = np.empty(new_cap, dtype=np.int64)
            ids[: self._pool_size] = self._pool_ids[: self._pool_size]
            self._pool_vecs, self._pool_ids = vecs, ids
        row = self._pool_size
        self._pool_vecs[row] = emb
        self._pool_ids[row] = doc_id
        self._pool_row[doc_id] = row
        self._pool_size += 1

    def _pool_remove(self, doc_id: int) -> None:
        row = self._pool_row.pop(doc_id)
        last = self._pool_size - 1
        if row != last:
            moved = int(self._pool_ids[last])
            self._pool_vecs[row] = self._pool_vecs[last]
            self._pool_ids[row] = moved
            self._pool_row[moved] = row
        self._pool_size = last

    # ---------------------------------------------------------------- queries

    def lookup(self, doc_id: int) -> set[int]:
        """Cached query ids whose result list contains ``doc_id``."""
        return set(self._postings.get(int(doc_id), ()))

    def topk(self, q: np.ndarray, k: int) -> list[Hit]:
        """Exact top-``k`` over the deduplicated cache-channel pool."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if self._pool_size == 0:
            return []
        q = check_vector(q, dim=self.dim)
        scores = similarity_batch(self._pool_vecs[: self._pool_size], q)
        return rank_hits(self._pool_ids[: self._pool_size], scores, k)

    def nearest_cached_query(self, q: np.ndarray) -> tuple[int, float] | None:
        """Most similar cached query embedding, ties to the lowest query id.

        This is the primitive reuse-style baselines are built on; the cache
        channel itself never consults it.
        """
        if not self._entries:
            return None
        q = check_vector(q, dim=self.dim)
        valid = np.flatnonzero(self._qids >= 0)
        sims = similarity_batch(self._qemb[valid], q)
        qids = self._qids[valid]
        best = np.lexsort((qids, -sims))[0]
        return int(qids[best]), float(sims[best])

    def entry_docs(self, query_id: int) -> tuple[int, ...] | None:
        """Result list of the newest entry with this query id, if cached."""
        for entry in reversed(self._entries):
            if entry.query_id == query_id:
                return entry.doc_ids
        return None

    def doc_embedding(self, doc_id: int) -> np.ndarray:
        return self._pool_vecs[self._pool_row[int(doc_id)]].copy()

    # ------------------------------------------------------------- accounting

    def memory_footprint(self) -> int:
        """Modeled size in bytes: embeddings, postings and entry metadata.

        Embeddings count 4 bytes per component. Every (entry, doc) reference
        contributes one 8-byte doc id in the entry plus one 8-byte posting;
        each distinct pooled document contributes its embedding once.
        """
        total_refs = sum(len(e.doc_ids) for e in self._entries)
        entry_bytes = sum(
            _ENTRY_META_BYTES + _ID_BYTES * len(e.doc_ids) + 4 * self.dim
            for e in self._entries
        )
        pool_bytes = self._pool_size * (_DOC_META_BYTES + 4 * self.dim)
        return _BASE_BYTES + entry_bytes + pool_bytes + _ID_BYTES * total_refs

    # ------------------------------------------------------------------- dump

    def snapshot_lines(self) -> Iterator[str]:
        """Debug dump, one line per entry in FIFO order."""
        for e in self._entries:
            yield f"{e.query_id}\t{e.insert_seq}\t{','.join(str(d) for d in e.doc_ids)}"
