"""Input validation helpers shared across the pipeline modules."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch


def check_array(x, name: str, shape=None, ndim=None, dtype_kind=None) -> np.ndarray:
    """Coerce to ndarray and check shape/ndim/dtype kind.

    ``shape`` entries of ``None`` match any size. ``dtype_kind`` is a string
    of acceptable numpy dtype kinds, e.g. ``"uif"`` for integer or float.
    """
    arr = np.asarray(x)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatch(f"{name}: expected {ndim} dims, got {arr.ndim}")
    if shape is not None:
        if arr.ndim != len(shape):
            raise DimensionMismatch(
                f"{name}: expected shape {shape}, got {arr.shape}")
        for want, got in zip(shape, arr.shape):
            if want is not None and want != got:
                raise DimensionMismatch(
                    f"{name}: expected shape {shape}, got {arr.shape}")
    if dtype_kind is not None and arr.dtype.kind not in dtype_kind:
        raise DimensionMismatch(
            f"{name}: expected dtype kind in {dtype_kind!r}, got {arr.dtype}")
    return arr


def check_points(x, name: str, last: int) -> np.ndarray:
    """Validate an (..., last) float coordinate array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim < 1 or arr.shape[-1] != last:
        raise DimensionMismatch(
            f"{name}: expected trailing dimension {last}, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_raster_matches(arr: np.ndarray, name: str, width: int, height: int) -> np.ndarray:
    """Check the leading two dims of a raster against camera dimensions."""
    if arr.ndim < 2 or arr.shape[0] != height or arr.shape[1] != width:
        raise DimensionMismatch(
            f"{name}: raster {arr.shape[1::-1] if arr.ndim >= 2 else arr.shape}"
            f" does not match camera {width}x{height}")
    return arr
