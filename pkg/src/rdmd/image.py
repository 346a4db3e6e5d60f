"""The universal signal carrier: C x H x W float arrays.

Images, measurements, and solver iterates are all plain numpy arrays of
shape ``(channels, height, width)`` in float64.  Stored images live in
[0, 1]; intermediate iterates are unconstrained.  Finiteness is enforced
at module boundaries, not inside hot loops.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

Shape3 = tuple[int, int, int]


def as_image(x, name: str = "image") -> np.ndarray:
    """Coerce `x` to a float64 (C, H, W) array and validate it.

    Raises ShapeError for wrong dimensionality and ParameterError for
    non-finite entries.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be (C, H, W), got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ShapeError(f"{name} has an empty axis: shape={arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains NaN or Inf")
    return arr


def check_shape(x: np.ndarray, expected: Shape3, name: str = "image") -> None:
    if tuple(x.shape) != tuple(expected):
        raise ShapeError(f"{name}: expected shape {tuple(expected)}, got {tuple(x.shape)}")


def l2_norm_sq(x: np.ndarray) -> float:
    """Squared Euclidean norm over all entries."""
    return float(np.vdot(x, x).real)
