"""Built-in corner detectors and external keypoint ingestion.

Harris uses Sobel gradients, a Gaussian window, and
``R = det(M) - k trace(M)^2``; Shi-Tomasi scores the smaller eigenvalue of
the same structure tensor. Responses are evaluated at interior pixels and
local maxima are refined to sub-pixel precision with a separable quadratic
fit, which never moves a maximum by more than 0.5 px per axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import MissingField, ParseError, UnsupportedDetector
from .keypoints import Keypoint

DETECTOR_KINDS = ("harris", "shi_tomasi", "external")


@dataclass(frozen=True)
class DetectorConfig:
    kind: str = "harris"
    n_kpts: int = 2048
    harris_k: float = 0.06
    smoothing_sigma: float = 1.0
    response_threshold: float = 1e-8
    subpixel: bool = True

    def __post_init__(self):
        if self.n_kpts < 1:
            raise ValueError("n_kpts must be >= 1")
        if self.smoothing_sigma <= 0:
            raise ValueError("smoothing_sigma must be > 0")


def structure_tensor(img: np.ndarray, sigma: float):
    """Gaussian-windowed products of Sobel derivatives (Ixx, Ixy, Iyy)."""
    ix = ndimage.sobel(img, axis=1, mode="reflect") / 8.0
    iy = ndimage.sobel(img, axis=0, mode="reflect") / 8.0
    ixx = ndimage.gaussian_filter(ix * ix, sigma, mode="reflect")
    ixy = ndimage.gaussian_filter(ix * iy, sigma, mode="reflect")
    iyy = ndimage.gaussian_filter(iy * iy, sigma, mode="reflect")
    return ixx, ixy, iyy


def harris_response(img: np.ndarray, k: float = 0.06,
                    sigma: float = 1.0) -> np.ndarray:
    ixx, ixy, iyy = structure_tensor(img, sigma)
    return (ixx * iyy - ixy * ixy) - k * (ixx + iyy) ** 2


def shi_tomasi_response(img: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    ixx, ixy, iyy = structure_tensor(img, sigma)
    half_tr = 0.5 * (ixx + iyy)
    return half_tr - np.sqrt((0.5 * (ixx - iyy)) ** 2 + ixy * ixy)


def response_map(img: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    if cfg.kind == "harris":
        return harris_response(img, cfg.harris_k, cfg.smoothing_sigma)
    if cfg.kind == "shi_tomasi":
        return shi_tomasi_response(img, cfg.smoothing_sigma)
    raise UnsupportedDetector(f"no built-in response for kind {cfg.kind!r}")


def detect(img: np.ndarray, cfg: DetectorConfig, warp_id: int = 0,
           valid_mask: np.ndarray | None = None) -> list[Keypoint]:
    """All above-threshold strict local maxima of the detector response.

    ``valid_mask`` (same shape as the image) restricts where maxima may sit;
    the refinement pipeline uses it to reject responses triggered by the
    zero-padding seam of warped images. Output is sorted by descending
    score, ties by (y, x).
    """
    r = response_map(img, cfg)
    h, w = r.shape
    if h < 3 or w < 3:
        return []

    c = r[1:-1, 1:-1]
    peak = (
        (c > r[:-2, :-2]) & (c > r[:-2, 1:-1]) & (c > r[:-2, 2:])
        & (c > r[1:-1, :-2]) & (c > r[1:-1, 2:])
        & (c > r[2:, :-2]) & (c > r[2:, 1:-1]) & (c > r[2:, 2:])
        & (c > cfg.response_threshold)
    )
    ys, xs = np.nonzero(peak)
    ys = ys + 1
    xs = xs + 1
    if valid_mask is not None:
        keep = valid_mask[ys, xs]
        ys, xs = ys[keep], xs[keep]

    scores = r[ys, xs]
    if cfg.subpixel:
        # Separable parabola through the three samples per axis; the strict
        # maximum guarantees a negative curvature, so |offset| < 0.5.
        dx_num = r[ys, xs - 1] - r[ys, xs + 1]
        dx_den = r[ys, xs - 1] - 2.0 * scores + r[ys, xs + 1]
        dy_num = r[ys - 1, xs] - r[ys + 1, xs]
        dy_den = r[ys - 1, xs] - 2.0 * scores + r[ys + 1, xs]
        off_x = 0.5 * dx_num / dx_den
        off_y = 0.5 * dy_num / dy_den
        px = xs + off_x
        py = ys + off_y
    else:
        px = xs.astype(np.float64)
        py = ys.astype(np.float64)

    kps = [Keypoint(float(x), float(y), float(s), warp_id)
           for x, y, s in zip(px, py, scores)]
    kps.sort(key=lambda p: (-p.score, p.y, p.x))
    return kps


def select_top_n(kps: list[Keypoint], n: int) -> list[Keypoint]:
    """The n highest-score keypoints; ties broken by (y, x) order."""
    ranked = sorted(kps, key=lambda p: (-p.score, p.y, p.x))
    return ranked[:n]


def load_external_keypoints(path, warp_id: int) -> list[Keypoint]:
    """Read a JSON-lines keypoint file (fields x, y, score; optional desc).

    Coordinates are interpreted in the warped image frame identified by
    ``warp_id``.
    """
    kps = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})",
                                 path=str(path), line=lineno) from exc
            if not isinstance(rec, dict):
                raise ParseError("record is not an object",
                                 path=str(path), line=lineno)
            for key in ("x", "y", "score"):
                if key not in rec:
                    raise MissingField(f"missing field {key!r}",
                                       path=str(path), line=lineno)
            desc = rec.get("desc")
            kps.append(Keypoint(
                float(rec["x"]), float(rec["y"]), float(rec["score"]),
                warp_id,
                tuple(float(v) for v in desc) if desc is not None else None,
            ))
    return kps
