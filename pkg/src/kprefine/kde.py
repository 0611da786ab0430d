"""Grid kernel density estimation and candidate cluster centers.

The density at pixel center x is ``(N h^2)^-1 sum_i phi((x_i - x) / h)``
with the Gaussian kernel ``phi(u) = (2 pi h)^-1 exp(-|u|^2 / 2)``. The
``(2 pi h)^-1`` kernel normalization is kept as given even though it is
nonstandard; maxima locations and ordering are invariant to the global
scale, and the auto threshold below is expressed in the same units.

Kernel stamps are truncated at ``TRUNCATION_FACTOR * h``; beyond that a
contribution is below 4e-6 of the kernel peak and is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _backend
from .errors import EmptyPointSet
from .keypoints import as_xy

TRUNCATION_FACTOR = 5.0


@dataclass(frozen=True)
class KdeConfig:
    """Bandwidth and maxima-search parameters.

    ``density_threshold=None`` selects the auto rule of
    :func:`auto_threshold`: the density two points contribute at distance h,
    which keeps single stray detections from seeding mixture components.
    ``max_candidates=None`` defers the cap to the caller (the pipeline uses
    twice the keypoint budget).
    """

    bandwidth: float = 0.5
    maxima_window_radius: int = 3
    density_threshold: float | None = None
    max_candidates: int | None = None

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")
        if self.maxima_window_radius < 1:
            raise ValueError("maxima_window_radius must be >= 1")
        if self.density_threshold is not None and self.density_threshold < 0:
            raise ValueError("density_threshold must be >= 0")


@dataclass(frozen=True)
class DensityGrid:
    """Per-pixel density values on the image lattice (``values[y, x]``)."""

    width: int
    height: int
    values: np.ndarray
    n_points: int


def auto_threshold(n_points: int, h: float) -> float:
    """Density contributed by two points at distance h from a pixel."""
    phi1 = (1.0 / (2.0 * np.pi * h)) * np.exp(-0.5)
    return 2.0 * phi1 / (n_points * h * h)


def evaluate_grid(points, cfg: KdeConfig, dims: tuple[int, int]) -> DensityGrid:
    """Evaluate the density at every pixel center of a W x H grid.

    Points are canonicalized (sorted, exact duplicates coalesced into
    integer multiplicities) before accumulation, which makes the result
    bit-identical under input permutation and under duplicating every
    point.
    """
    xy = as_xy(points)
    n = xy.shape[0]
    if n == 0:
        raise EmptyPointSet("KDE needs at least one point")
    width, height = dims
    h = cfg.bandwidth

    uniq, counts = np.unique(xy, axis=0, return_counts=True)
    acc = _backend.kde_accumulate(
        np.ascontiguousarray(uniq[:, 0]),
        np.ascontiguousarray(uniq[:, 1]),
        counts.astype(np.float64),
        int(width), int(height), float(h), float(TRUNCATION_FACTOR * h),
    )
    values = acc / (n * (h * h * (2.0 * np.pi * h)))
    return DensityGrid(width=int(width), height=int(height), values=values,
                       n_points=n)


def find_local_maxima(grid: DensityGrid, cfg: KdeConfig) -> list[tuple[int, int]]:
    """Pixels strictly dominating their Chebyshev-r window, above threshold.

    Windows are clipped at the borders. Exact ties yield no maximum; the
    noise injection upstream makes ties measure-zero in practice. Returns
    (x, y) pixel coordinates ordered by (y, x).
    """
    v = grid.values
    r = cfg.maxima_window_radius
    zeta = cfg.density_threshold
    if zeta is None:
        zeta = auto_threshold(grid.n_points, cfg.bandwidth)

    maxf = ndimage.maximum_filter(v, size=2 * r + 1, mode="constant",
                                  cval=-np.inf)
    ys, xs = np.nonzero((v == maxf) & (v > zeta))
    h, w = v.shape
    out = []
    for y, x in zip(ys, xs):
        window = v[max(0, y - r):min(h, y + r + 1),
                   max(0, x - r):min(w, x + r + 1)]
        # strict dominance: the window max must occur exactly once
        if np.count_nonzero(window == v[y, x]) == 1:
            out.append((int(x), int(y)))
    return out


def select_top_maxima(maxima: list[tuple[int, int]], grid: DensityGrid,
                      cap: int) -> list[tuple[int, int]]:
    """The ``cap`` highest-density maxima; ties broken by (y, x) order."""
    ranked = sorted(maxima, key=lambda p: (-grid.values[p[1], p[0]], p[1], p[0]))
    return ranked[:cap]
