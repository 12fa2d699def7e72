"""Similarity primitives and deterministic randomness.

Embeddings are plain numpy arrays. The canonical on-disk representation is
32-bit floats (see :mod:`specrag.fileio`); all similarity arithmetic is done
in 64-bit precision so that top-k rankings are reproducible across runs.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateVectorError, DimError

NORM_TOL = 1e-5
_ZERO_NORM = 1e-12


def inner_product(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two embeddings with 64-bit accumulation.

    For L2-normalized inputs this is the cosine similarity. Symmetric in its
    arguments bit-for-bit, and bit-identical to one row of
    :func:`similarity_batch` (both reduce the elementwise product with the
    same pairwise summation).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


def normalize(v: np.ndarray) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm, preserving direction.

    Raises :class:`DegenerateVectorError` for (near) zero vectors.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= _ZERO_NORM:
        raise DegenerateVectorError(f"cannot normalize vector with norm {norm!r}")
    return v / norm


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic random stream for the given seed.

    All randomness in the package flows through generators created here (or
    through sub-streams spawned from them); there is no global RNG state.
    """
    return np.random.default_rng(seed)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent stream derived from ``seed`` and an integer key path.

    Used to give concurrent units of work (e.g. one query in flight) their
    own stream so scheduling cannot change what anyone samples.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def similarity_batch(matrix: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Inner products of every row of ``matrix`` against ``q``.

    Computed as an elementwise product reduced along the feature axis, so
    each row's accumulation order is identical no matter how many rows are
    scored. Candidate subsets therefore score bit-identically to full scans,
    which exact-equivalence checks between index kinds rely on.
    """
    if matrix.shape[-1] != q.shape[-1]:
        raise DimError(f"dimension mismatch: {matrix.shape[-1]} vs {q.shape[-1]}")
    if matrix.size == 0:
        return np.zeros(matrix.shape[0], dtype=np.float64)
    return np.sum(matrix * np.asarray(q, dtype=np.float64), axis=1)
