"""Input validation helpers for embedding vectors and matrices.

These mirror the role of ``sklearn.utils.check_array`` for this package:
every public ``fit``/``search``/``retrieve`` surface funnels its array
arguments through here, so shape, finiteness and normalization problems
surface as typed errors at the boundary instead of as NaN scores later.
"""

from __future__ import annotations

import numpy as np

from .core import NORM_TOL
from .errors import DimError, NotReadyError

__all__ = ["check_vector", "check_matrix", "check_fitted"]


def check_vector(
    v: np.ndarray,
    dim: int | None = None,
    normalized: bool = False,
    name: str = "vector",
) -> np.ndarray:
    """Validate a single embedding and return it as a float64 1-D array."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimError(f"{name} has dim {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if normalized:
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"{name} is not unit-norm (norm={norm!r})")
    return arr


def check_matrix(
    X: np.ndarray,
    dim: int | None = None,
    normalized: bool = False,
    name: str = "X",
) -> np.ndarray:
    """Validate an (n, dim) embedding matrix and return it as float64."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise DimError(f"{name} must be 2-D, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimError(f"{name} has dim {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if normalized and arr.shape[0]:
        norms = np.linalg.norm(arr, axis=1)
        bad = np.abs(norms - 1.0) > NORM_TOL
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(f"{name} row {i} is not unit-norm (norm={norms[i]!r})")
    return arr


def check_fitted(obj, attr: str):
    """Raise :class:`NotReadyError` unless ``obj`` carries fitted state."""
    if getattr(obj, attr, None) is None:
        raise NotReadyError(f"{type(obj).__name__} is not fitted; call fit() first")
