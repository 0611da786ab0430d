"""Warped image rendering, noise injection, and keypoint back-projection.

Rendering uses inverse mapping with bilinear interpolation. Sample points
outside the source image area (the rectangle extending half a pixel beyond
the border pixel centers) produce 0; in-area samples are interpolated with
coordinates clamped to the border pixel centers, so a constant image stays
constant over the whole warped support.
"""

from __future__ import annotations

import numpy as np

from .geometry import AffineTransform, anchor_to_image, apply_points, invert
from .keypoints import Keypoint


def warp_image(img: np.ndarray, t: AffineTransform,
               out_size: tuple[int, int] | None = None) -> np.ndarray:
    """Render the image under a full (already anchored) affine transform.

    ``out_size`` is (width, height); when omitted it is derived from the
    bounding box of the warped image area, which assumes the transform
    places that box at the canvas origin (as :func:`anchor_to_image` does).
    The identity transform reproduces the input bit-exactly.
    """
    h, w = img.shape
    if out_size is None:
        _, out_w, out_h = anchor_to_image(
            AffineTransform(t.a11, t.a12, t.a21, t.a22, 0.0, 0.0), w, h)
    else:
        out_w, out_h = out_size
    inv = invert(t)

    qx, qy = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    sx = inv.a11 * qx + inv.a12 * qy + inv.tx
    sy = inv.a21 * qx + inv.a22 * qy + inv.ty

    inside = (sx >= -0.5) & (sx <= w - 0.5) & (sy >= -0.5) & (sy <= h - 0.5)
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0

    out = (img[y0, x0] * (1.0 - fx) * (1.0 - fy)
           + img[y0, x1] * fx * (1.0 - fy)
           + img[y1, x0] * (1.0 - fx) * fy
           + img[y1, x1] * fx * fy)
    out[~inside] = 0.0
    return out


def render_warp(img: np.ndarray, t: AffineTransform):
    """Anchor ``t`` to the image and render; returns (warped, full transform).

    ``full`` maps source pixel coordinates to coordinates in the returned
    canvas and is what detections must be back-projected through.
    """
    h, w = img.shape
    full, out_w, out_h = anchor_to_image(t, w, h)
    return warp_image(img, full, (out_w, out_h)), full


def add_gaussian_noise(img: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """I.i.d. zero-mean Gaussian perturbation, clamped to [0, 1]."""
    if sigma < 0:
        raise ValueError("noise sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return np.clip(img + rng.normal(0.0, sigma, img.shape), 0.0, 1.0)


def backproject_keypoints(kps: list[Keypoint], t: AffineTransform,
                          bounds: tuple[int, int]) -> list[Keypoint]:
    """Map warped-frame keypoints through the inverse transform.

    Keypoints landing outside ``[0, W) x [0, H)`` of the original image are
    discarded rather than clamped (clamping would fabricate border
    clusters). Scores and warp ids are preserved.
    """
    if not kps:
        return []
    width, height = bounds
    inv = invert(t)
    xy = apply_points(inv, np.array([(p.x, p.y) for p in kps]))
    out = []
    for p, (x, y) in zip(kps, xy):
        if 0.0 <= x < width and 0.0 <= y < height:
            out.append(Keypoint(float(x), float(y), p.score, p.warp_id, p.desc))
    return out


def support_mask(shape_wh: tuple[int, int], full: AffineTransform,
                 out_size: tuple[int, int]) -> np.ndarray:
    """Boolean mask of output pixels sampled from inside the source image."""
    w, h = shape_wh
    ones = np.ones((h, w), dtype=np.float64)
    return warp_image(ones, full, out_size) > 0.999
