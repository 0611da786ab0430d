"""Keypoint container and array conversion helpers.

Coordinate convention used across the package: pixel centers sit at integer
coordinates, with ``x`` running along columns and ``y`` along rows. A W x H
image therefore spans the half-open domain ``[0, W) x [0, H)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Keypoint:
    """Sub-pixel detection with its detector score and source warp id.

    ``desc`` optionally carries a descriptor vector for matching-based
    evaluation; it plays no role in refinement itself.
    """

    x: float
    y: float
    score: float = 0.0
    warp_id: int = 0
    desc: tuple[float, ...] | None = field(default=None, compare=False)


def as_xy(points) -> np.ndarray:
    """Return an (N, 2) float64 array of positions.

    Accepts a list of :class:`Keypoint`, an (N, 2) array-like, or an empty
    sequence.
    """
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=np.float64)
        if arr.size == 0:
            return arr.reshape(0, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"expected (N, 2) positions, got shape {arr.shape}")
        return arr
    if len(points) == 0:
        return np.empty((0, 2), dtype=np.float64)
    if isinstance(points[0], Keypoint):
        return np.array([(p.x, p.y) for p in points], dtype=np.float64)
    return as_xy(np.asarray(points, dtype=np.float64))


def warp_ids_of(points) -> np.ndarray | None:
    """Warp ids as an int array, or None when positions carry no ids."""
    if isinstance(points, np.ndarray) or len(points) == 0:
        return None
    if isinstance(points[0], Keypoint):
        return np.array([p.warp_id for p in points], dtype=np.int64)
    return None


def scores_of(points) -> np.ndarray:
    if len(points) == 0:
        return np.empty(0, dtype=np.float64)
    return np.array([p.score for p in points], dtype=np.float64)
