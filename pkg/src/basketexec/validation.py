"""Small input-validation helpers used across the public API."""

from __future__ import annotations

import numpy as np

from .errors import Asymmetric


def as_vector(x, n: int | None = None, name: str = "array") -> np.ndarray:
    """Coerce to a finite 1-D float64 array, optionally of fixed length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} must have length {n}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_square_matrix(x, n: int | None = None, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite square float64 matrix."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} must be {n}x{n}, got {arr.shape[0]}x{arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_symmetric(m: np.ndarray, rtol: float = 1e-12, name: str = "matrix") -> None:
    """Raise Asymmetric when max |A - A^T| exceeds rtol * max |A|."""
    scale = np.abs(m).max() or 1.0
    gap = np.abs(m - m.T).max()
    if gap > rtol * scale:
        raise Asymmetric(f"{name} asymmetric: max|A-A^T|={gap:.3e} vs scale {scale:.3e}")


def ensure_rng(seed) -> np.random.Generator:
    """Accept a Generator, a seed, or None (fresh entropy) and return a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
