"""NumPy implementations of the hot kernels.

These mirror the compiled extension in ``_ckernels.pyx``. Accumulation
order is fixed (point-major for the KDE, pair-array order for the EM
passes) so results are deterministic for a given input ordering.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def kde_accumulate(xs, ys, mult, width, height, h, cutoff):
    """Sum of truncated Gaussian kernel stamps on the pixel grid.

    Returns the raw accumulator; the caller applies the overall KDE
    normalization. Contributions beyond ``cutoff`` pixels (Euclidean) are
    zero.
    """
    grid = np.zeros((height, width), dtype=np.float64)
    n = xs.shape[0]
    if n == 0:
        return grid
    inv2h2 = 1.0 / (2.0 * h * h)
    half = int(np.ceil(cutoff + 0.5))
    offs = np.arange(-half, half + 1, dtype=np.int64)

    cx = np.rint(xs).astype(np.int64)
    cy = np.rint(ys).astype(np.int64)
    gx = cx[:, None] + offs[None, :]                      # (n, S)
    gy = cy[:, None] + offs[None, :]
    dx = gx.astype(np.float64) - xs[:, None]
    dy = gy.astype(np.float64) - ys[:, None]
    d2 = dy[:, :, None] ** 2 + dx[:, None, :] ** 2        # (n, Sy, Sx)
    ok = (d2 <= cutoff * cutoff)
    ok &= (gy >= 0)[:, :, None] & (gy < height)[:, :, None]
    ok &= (gx >= 0)[:, None, :] & (gx < width)[:, None, :]

    vals = mult[:, None, None] * np.exp(-d2 * inv2h2)
    iy = np.broadcast_to(gy[:, :, None], d2.shape)[ok]
    ix = np.broadcast_to(gx[:, None, :], d2.shape)[ok]
    np.add.at(grid, (iy, ix), vals[ok])
    return grid


def em_pair_terms(px, py, mux, muy, sigma, alpha, pair_pt, pair_comp, mode):
    """Weighted responsibility numerators per (point, component) pair.

    ``mode``: 0 plain Gaussian, 1 soft outlier down-weighting, 2 hard 3-sigma
    cut. Returns (numer per pair, denominator per point).
    """
    n = px.shape[0]
    if pair_pt.shape[0] == 0:
        return np.empty(0, dtype=np.float64), np.zeros(n, dtype=np.float64)
    dx = px[pair_pt] - mux[pair_comp]
    dy = py[pair_pt] - muy[pair_comp]
    d2 = dx * dx + dy * dy
    s = sigma[pair_comp]
    s2 = s * s
    g = np.exp(-d2 / (2.0 * s2)) / (2.0 * np.pi * s2)
    if mode == 0:
        w = 1.0
    elif mode == 1:
        d = np.sqrt(d2)
        tail = d - 3.0 * s
        w = np.where(d < 3.0 * s, 1.0, np.exp(-(tail * tail) / (2.0 * s2)))
    elif mode == 2:
        w = (d2 < 9.0 * s2).astype(np.float64)
    else:
        raise ValueError(f"unknown weighting mode {mode}")
    numer = alpha[pair_comp] * w * g
    denom = np.bincount(pair_pt, weights=numer, minlength=n)
    return numer, denom


def em_moments(px, py, numer, denom, pair_pt, pair_comp, n_comp):
    """Responsibility mass and first moments per component."""
    dz = denom[pair_pt]
    gamma = np.where(dz > 0.0, numer / np.where(dz > 0.0, dz, 1.0), 0.0)
    gsum = np.bincount(pair_comp, weights=gamma, minlength=n_comp)
    gx = np.bincount(pair_comp, weights=gamma * px[pair_pt], minlength=n_comp)
    gy = np.bincount(pair_comp, weights=gamma * py[pair_pt], minlength=n_comp)
    return gsum, gx, gy


def em_spread(px, py, numer, denom, pair_pt, pair_comp, mux_new, muy_new, n_comp):
    """Responsibility-weighted squared distances to the updated means."""
    dz = denom[pair_pt]
    gamma = np.where(dz > 0.0, numer / np.where(dz > 0.0, dz, 1.0), 0.0)
    ddx = px[pair_pt] - mux_new[pair_comp]
    ddy = py[pair_pt] - muy_new[pair_comp]
    return np.bincount(pair_comp, weights=gamma * (ddx * ddx + ddy * ddy),
                       minlength=n_comp)
