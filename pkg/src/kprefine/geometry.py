"""Affine transforms and the fixed warp augmentation set.

Augmentation transforms are stored with a pure linear part (zero
translation). Rendering anchors them at the image center and shifts the
result so the warped content starts at the canvas origin; see
:func:`anchor_to_image`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, SingularTransform

_SINGULAR_TOL = 1e-12

# Default factor sets: four isotropic scalings, the same four factors applied
# anisotropically along x and along y, and four shear factors along x and y.
# Together with the identity this yields 21 transforms.
DEFAULT_ISO_SCALES = (1.5, 1.25, 0.75, 0.5)
DEFAULT_ANISO_SCALES = (1.5, 1.25, 0.75, 0.5)
DEFAULT_SHEARS = (0.2, -0.2, 0.6, -0.6)


@dataclass(frozen=True)
class AffineTransform:
    """Invertible 2-D affine map ``p -> L p + t`` in pixel coordinates."""

    a11: float = 1.0
    a12: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def matrix3(self) -> np.ndarray:
        """Homogeneous 3x3 representation (useful as a ground-truth H)."""
        return np.array(
            [
                [self.a11, self.a12, self.tx],
                [self.a21, self.a22, self.ty],
                [0.0, 0.0, 1.0],
            ]
        )


IDENTITY = AffineTransform()


@dataclass(frozen=True)
class WarpConfig:
    """Factor lists defining the augmentation set."""

    iso_scales: tuple[float, ...] = DEFAULT_ISO_SCALES
    aniso_scales: tuple[float, ...] = DEFAULT_ANISO_SCALES
    shears: tuple[float, ...] = DEFAULT_SHEARS


@dataclass(frozen=True)
class AugmentationSet:
    """Ordered warp list; entry 0 is always the identity."""

    transforms: tuple[AffineTransform, ...]
    ids: tuple[int, ...]
    labels: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.transforms)


def apply_point(t: AffineTransform, p) -> tuple[float, float]:
    """Map a single (x, y) point through the transform."""
    x, y = p
    return (t.a11 * x + t.a12 * y + t.tx, t.a21 * x + t.a22 * y + t.ty)


def apply_points(t: AffineTransform, xy: np.ndarray) -> np.ndarray:
    """Vectorized :func:`apply_point` for an (N, 2) array."""
    xy = np.asarray(xy, dtype=np.float64)
    out = np.empty_like(xy)
    out[:, 0] = t.a11 * xy[:, 0] + t.a12 * xy[:, 1] + t.tx
    out[:, 1] = t.a21 * xy[:, 0] + t.a22 * xy[:, 1] + t.ty
    return out


def invert(t: AffineTransform) -> AffineTransform:
    """Closed-form inverse; raises SingularTransform when |det| < 1e-12."""
    d = t.det()
    if abs(d) < _SINGULAR_TOL:
        raise SingularTransform(f"determinant {d!r} below {_SINGULAR_TOL}")
    b11 = t.a22 / d
    b12 = -t.a12 / d
    b21 = -t.a21 / d
    b22 = t.a11 / d
    return AffineTransform(
        b11, b12, b21, b22,
        -(b11 * t.tx + b12 * t.ty),
        -(b21 * t.tx + b22 * t.ty),
    )


def _linear(a11, a12, a21, a22) -> AffineTransform:
    return AffineTransform(float(a11), float(a12), float(a21), float(a22), 0.0, 0.0)


def build_augmentation_set(config: WarpConfig = WarpConfig()) -> AugmentationSet:
    """Identity + isotropic scalings + x/y scalings + x/y shears.

    Ordering is fixed (identity, isotropic, aniso-x, aniso-y, shear-x,
    shear-y; factors in the configured order) so warp ids are stable across
    runs. Zero scale factors are rejected.
    """
    for name, factors in (("iso_scales", config.iso_scales),
                          ("aniso_scales", config.aniso_scales)):
        for s in factors:
            if s == 0:
                raise InvalidConfig(f"{name} contains a zero scale factor")

    transforms: list[AffineTransform] = [IDENTITY]
    labels: list[str] = ["identity"]
    for s in config.iso_scales:
        transforms.append(_linear(s, 0, 0, s))
        labels.append(f"iso_{s:g}")
    for s in config.aniso_scales:
        transforms.append(_linear(s, 0, 0, 1))
        labels.append(f"scale_x_{s:g}")
    for s in config.aniso_scales:
        transforms.append(_linear(1, 0, 0, s))
        labels.append(f"scale_y_{s:g}")
    for m in config.shears:
        transforms.append(_linear(1, m, 0, 1))
        labels.append(f"shear_x_{m:+g}")
    for m in config.shears:
        transforms.append(_linear(1, 0, m, 1))
        labels.append(f"shear_y_{m:+g}")

    return AugmentationSet(
        transforms=tuple(transforms),
        ids=tuple(range(len(transforms))),
        labels=tuple(labels),
    )


def anchor_to_image(t: AffineTransform, width: int, height: int):
    """Anchor a transform at the image center and fit the output canvas.

    Returns ``(full, out_width, out_height)`` where ``full`` maps source
    pixel coordinates to output pixel coordinates. The linear part acts about
    the image center and the translation is chosen so the axis-aligned
    bounding box of the warped image area starts at the canvas origin; no
    content is cropped. For the identity transform this returns the identity
    and the original canvas exactly.
    """
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    # Translation of the center-anchored map L (p - c) + c + t, written so
    # the identity yields exactly zero translation.
    t0x = cx - (t.a11 * cx + t.a12 * cy) + t.tx
    t0y = cy - (t.a21 * cx + t.a22 * cy) + t.ty

    # Pixel-area corners of the source image under the anchored map.
    corners = [(-0.5, -0.5), (width - 0.5, -0.5),
               (-0.5, height - 0.5), (width - 0.5, height - 0.5)]
    warped = [(t.a11 * x + t.a12 * y + t0x, t.a21 * x + t.a22 * y + t0y)
              for x, y in corners]
    xs = [c[0] for c in warped]
    ys = [c[1] for c in warped]
    xmin, xmax = min(xs), max(xs)
    ymin, ymax = min(ys), max(ys)

    out_w = int(math.ceil(xmax - xmin - 1e-9))
    out_h = int(math.ceil(ymax - ymin - 1e-9))
    full = AffineTransform(
        t.a11, t.a12, t.a21, t.a22,
        t0x + (-0.5 - xmin),
        t0y + (-0.5 - ymin),
    )
    return full, out_w, out_h
