"""Binary and text file formats.

Embedding container (``.hsem``), little-endian throughout::

    magic b"HSEM" | u32 version=1 | u32 dim | u64 count | count*dim float32

Label sidecar (``.tsv``): one record per document or query::

    id <TAB> entity_id <TAB> attr_id[,attr_id...]

Index snapshot (``.hsix``), little-endian::

    magic b"HSIX" | u32 version=1 | u32 kind | u32 dim | payload

    kind 1 (flat):  u64 count | count int64 ids | count*dim float32
    kind 2 (ivf):   u32 n_buckets | i64 seed | f64 subset_fraction
                    | n_buckets*dim float64 centroids
                    | per bucket: u64 len | len int64 ids | len*dim float32

Document vectors are stored at their canonical 32-bit width; snapshots
round-trip exactly for corpora that originate from an embedding container.
Centroids keep full 64-bit precision so probing order survives a round trip.

Cache snapshot dump: the line format produced by
:meth:`specrag.cache.QueryCache.snapshot_lines`.
"""

from __future__ import annotations

import struct

import numpy as np

from .cache import QueryCache
from .errors import FormatError, IoError
from .index import FlatIndex, IvfIndex

HSEM_MAGIC = b"HSEM"
HSIX_MAGIC = b"HSIX"
_KIND_FLAT = 1
_KIND_IVF = 2


# ----------------------------------------------------------------- embeddings


def write_embeddings(path: str, X: np.ndarray) -> None:
    X = np.asarray(X)
    if X.ndim != 2:
        raise FormatError(f"embedding matrix must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise FormatError("embedding matrix contains non-finite values")
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sIIQ", HSEM_MAGIC, 1, X.shape[1], X.shape[0]))
            fh.write(np.ascontiguousarray(X, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write embeddings to {path}: {exc}") from exc


def read_embeddings(path: str) -> np.ndarray:
    """Load an embedding container as a float32 (count, dim) array."""
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) != 20:
            raise FormatError(f"{path}: truncated header")
        magic, version, dim, count = struct.unpack("<4sIIQ", header)
        if magic != HSEM_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = fh.read(4 * dim * count)
    if len(payload) != 4 * dim * count:
        raise FormatError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()


# --------------------------------------------------------------------- labels


def write_labels(path: str, rows) -> None:
    """Write (id, entity_id, attr_ids) records as a tab-separated sidecar."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec_id, entity_id, attrs in rows:
                attr_txt = ",".join(str(int(a)) for a in attrs)
                fh.write(f"{int(rec_id)}\t{int(entity_id)}\t{attr_txt}\n")
    except OSError as exc:
        raise IoError(f"cannot write labels to {path}: {exc}") from exc


def read_labels(path: str) -> list[tuple[int, int, tuple[int, ...]]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
            try:
                rec_id, entity_id = int(parts[0]), int(parts[1])
                attrs = tuple(int(a) for a in parts[2].split(",") if a)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            out.append((rec_id, entity_id, attrs))
    return out


# ------------------------------------------------------------ index snapshots


def save_index(path: str, index) -> None:
    try:
        with open(path, "wb") as fh:
            if isinstance(index, FlatIndex):
                fh.write(struct.pack("<4sIII", HSIX_MAGIC, 1, _KIND_FLAT, index.dim_))
                fh.write(struct.pack("<Q", index.n_docs))
                fh.write(np.ascontiguousarray(index.doc_ids_, dtype="<i8").tobytes())
                fh.write(np.ascontiguousarray(index.vectors_, dtype="<f4").tobytes())
            elif isinstance(index, IvfIndex):
                fh.write(struct.pack("<4sIII", HSIX_MAGIC, 1, _KIND_IVF, index.dim_))
                fh.write(struct.pack("<Iqd", index.n_buckets, index.seed, index.subset_fraction))
                fh.write(np.ascontiguousarray(index.centroids_, dtype="<f8").tobytes())
                for rows in index.bucket_rows_:
                    fh.write(struct.pack("<Q", len(rows)))
                    fh.write(np.ascontiguousarray(index.doc_ids_[rows], dtype="<i8").tobytes())
                    fh.write(np.ascontiguousarray(index.vectors_[rows], dtype="<f4").tobytes())
            else:
                raise FormatError(f"cannot snapshot index of type {type(index).__name__}")
    except OSError as exc:
        raise IoError(f"cannot write index snapshot to {path}: {exc}") from exc


def _read_exact(fh, n: int, path: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"{path}: truncated snapshot")
    return buf


def load_index(path: str):
    """Load a snapshot back into a fitted FlatIndex or IvfIndex."""
    with open(path, "rb") as fh:
        magic, version, kind, dim = struct.unpack("<4sIII", _read_exact(fh, 16, path))
        if magic != HSIX_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        if kind == _KIND_FLAT:
            (count,) = struct.unpack("<Q", _read_exact(fh, 8, path))
            ids = np.frombuffer(_read_exact(fh, 8 * count, path), dtype="<i8").copy()
            vecs = np.frombuffer(_read_exact(fh, 4 * count * dim, path), dtype="<f4")
            index = FlatIndex()
            index.vectors_ = vecs.reshape(count, dim).astype(np.float64)
            index.doc_ids_ = ids
            index.dim_ = dim
            return index
        if kind == _KIND_IVF:
            n_buckets, seed, subset_fraction = struct.unpack("<Iqd", _read_exact(fh, 20, path))
            centroids = np.frombuffer(
                _read_exact(fh, 8 * n_buckets * dim, path), dtype="<f8"
            ).reshape(n_buckets, dim).copy()
            all_ids, all_vecs, bucket_rows = [], [], []
            offset = 0
            for _ in range(n_buckets):
                (length,) = struct.unpack("<Q", _read_exact(fh, 8, path))
                all_ids.append(np.frombuffer(_read_exact(fh, 8 * length, path), dtype="<i8"))
                all_vecs.append(
                    np.frombuffer(_read_exact(fh, 4 * length * dim, path), dtype="<f4").reshape(length, dim)
                )
                bucket_rows.append(np.arange(offset, offset + length, dtype=np.int64))
                offset += length
            index = IvfIndex(n_buckets=n_buckets, subset_fraction=subset_fraction, seed=seed)
            index.centroids_ = centroids
            index.doc_ids_ = np.concatenate(all_ids) if all_ids else np.empty(0, np.int64)
            index.vectors_ = (
                np.concatenate(all_vecs).astype(np.float64)
                if all_vecs
                else np.empty((0, dim), np.float64)
            )
            index.bucket_rows_ = bucket_rows
            index.dim_ = dim
            return index
        raise FormatError(f"{path}: unknown index kind {kind}")


# -------------------------------------------------------------- cache snapshot


def dump_cache_snapshot(cache: QueryCache, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for line in cache.snapshot_lines():
                fh.write(line + "\n")
    except OSError as exc:
        raise IoError(f"cannot write cache snapshot to {path}: {exc}") from exc


def read_cache_snapshot(path: str) -> list[tuple[int, int, tuple[int, ...]]]:
    """Parse a cache dump into (query_id, insert_seq, doc_ids) records."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
            out.append((int(parts[0]), int(parts[1]), tuple(int(d) for d in parts[2].split(","))))
    return out
