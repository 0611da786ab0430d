"""Pairwise repeatability-style metrics and score-distribution statistics.

All metrics are evaluated under a known ground-truth homography. A keypoint
belongs to the overlap region of a pair when its projection lands inside
the other image's bounds. Match correctness uses the symmetrized
reprojection distance (mean of the A->B and B->A distances) so every
metric is exactly symmetric under swapping the two images.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import EmptyOverlap, ParseError, SingularTransform
from .keypoints import as_xy


def load_homography(path) -> np.ndarray:
    """Read 9 whitespace-separated numbers, row-major; normalize H[2,2]=1."""
    text = open(path, "r", encoding="utf-8").read()
    try:
        vals = [float(v) for v in text.split()]
    except ValueError as exc:
        raise ParseError(f"non-numeric homography entry: {exc}",
                         path=str(path)) from exc
    if len(vals) != 9:
        raise ParseError(f"expected 9 numbers, found {len(vals)}",
                         path=str(path))
    h = np.array(vals, dtype=np.float64).reshape(3, 3)
    return normalize_homography(h)


def normalize_homography(h: np.ndarray) -> np.ndarray:
    if abs(np.linalg.det(h)) < 1e-12:
        raise SingularTransform("homography is singular")
    if h[2, 2] == 0:
        raise SingularTransform("homography has zero bottom-right entry")
    return h / h[2, 2]


def project(h: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Apply a homography to (N, 2) points."""
    xy = np.asarray(xy, dtype=np.float64)
    ones = np.ones((xy.shape[0], 1))
    p = np.hstack([xy, ones]) @ h.T
    return p[:, :2] / p[:, 2:3]


def _in_bounds(xy: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    w, h = dims
    return ((xy[:, 0] >= 0) & (xy[:, 0] < w)
            & (xy[:, 1] >= 0) & (xy[:, 1] < h))


class _PairGeometry:
    """Projections and overlap membership shared by the metrics."""

    def __init__(self, kps_a, kps_b, h, dims_a, dims_b):
        self.a = as_xy(kps_a)
        self.b = as_xy(kps_b)
        self.h = normalize_homography(np.asarray(h, dtype=np.float64))
        self.h_inv = normalize_homography(np.linalg.inv(self.h))
        self.a_in_b = project(self.h, self.a) if self.a.size else self.a
        self.b_in_a = project(self.h_inv, self.b) if self.b.size else self.b
        self.overlap_a = (_in_bounds(self.a_in_b, dims_b)
                          if self.a.size else np.zeros(0, bool))
        self.overlap_b = (_in_bounds(self.b_in_a, dims_a)
                          if self.b.size else np.zeros(0, bool))
        self.n_overlap = int(self.overlap_a.sum() + self.overlap_b.sum())

    def nn_distances(self):
        """(dist, index) of each projected keypoint's nearest neighbor."""
        inf = np.inf
        if self.b.size:
            d_a, j_a = cKDTree(self.b).query(self.a_in_b, workers=1)
        else:
            d_a = np.full(self.a.shape[0], inf)
            j_a = np.zeros(self.a.shape[0], dtype=np.int64)
        if self.a.size:
            d_b, j_b = cKDTree(self.a).query(self.b_in_a, workers=1)
        else:
            d_b = np.full(self.b.shape[0], inf)
            j_b = np.zeros(self.b.shape[0], dtype=np.int64)
        return d_a, j_a, d_b, j_b


def repeatability(kps_a, kps_b, h, thresholds,
                  dims_a: tuple[int, int],
                  dims_b: tuple[int, int]) -> dict[float, float]:
    """Fraction of overlap keypoints re-found in the other image.

    A keypoint counts when its projection lies within the threshold of some
    keypoint of the other image; the denominator is the total number of
    keypoints in the overlap region of both images.
    """
    geo = _PairGeometry(kps_a, kps_b, h, dims_a, dims_b)
    if geo.n_overlap == 0:
        raise EmptyOverlap("no keypoints project into the shared region")
    d_a, _, d_b, _ = geo.nn_distances()
    out = {}
    for t in thresholds:
        hits = (np.count_nonzero((d_a <= t) & geo.overlap_a)
                + np.count_nonzero((d_b <= t) & geo.overlap_b))
        out[float(t)] = hits / geo.n_overlap
    return out


def repeatability_mnn(kps_a, kps_b, h, thresholds,
                      dims_a: tuple[int, int],
                      dims_b: tuple[int, int]) -> dict[float, float]:
    """Repeatability restricted to mutual-nearest-neighbor pairs.

    A keypoint counts when it is repeatable and its nearest neighbor
    relation (in projected coordinates) is mutual, which compensates the
    overestimation of plain repeatability under dense detections.
    """
    geo = _PairGeometry(kps_a, kps_b, h, dims_a, dims_b)
    if geo.n_overlap == 0:
        raise EmptyOverlap("no keypoints project into the shared region")
    d_a, j_a, d_b, j_b = geo.nn_distances()
    if geo.a.shape[0] and geo.b.shape[0]:
        mutual_a = j_b[j_a] == np.arange(geo.a.shape[0])
        mutual_b = j_a[j_b] == np.arange(geo.b.shape[0])
    else:
        mutual_a = np.zeros(geo.a.shape[0], dtype=bool)
        mutual_b = np.zeros(geo.b.shape[0], dtype=bool)
    out = {}
    for t in thresholds:
        hits = (np.count_nonzero((d_a <= t) & mutual_a & geo.overlap_a)
                + np.count_nonzero((d_b <= t) & mutual_b & geo.overlap_b))
        out[float(t)] = hits / geo.n_overlap
    return out


def _match_distances(matches, kps_a, kps_b, h):
    a = as_xy(kps_a)
    b = as_xy(kps_b)
    h = normalize_homography(np.asarray(h, dtype=np.float64))
    h_inv = normalize_homography(np.linalg.inv(h))
    idx = np.asarray(matches, dtype=np.int64).reshape(-1, 2)
    if idx.size and (idx[:, 0].max() >= a.shape[0]
                     or idx[:, 1].max() >= b.shape[0]
                     or idx.min() < 0):
        raise IndexError("match indices out of range")
    pa = a[idx[:, 0]]
    pb = b[idx[:, 1]]
    d_ab = np.hypot(*(project(h, pa) - pb).T)
    d_ba = np.hypot(*(project(h_inv, pb) - pa).T)
    return 0.5 * (d_ab + d_ba)


def mma(matches, kps_a, kps_b, h, thresholds) -> dict[float, float] | None:
    """Correct-match ratio over proposed matches; None when none proposed.

    A match is correct when its symmetrized reprojection distance is below
    the threshold.
    """
    if len(matches) == 0:
        return None
    d = _match_distances(matches, kps_a, kps_b, h)
    return {float(t): float(np.count_nonzero(d < t) / d.shape[0])
            for t in thresholds}


def matching_score(matches, kps_a, kps_b, h, thresholds,
                   dims_a: tuple[int, int],
                   dims_b: tuple[int, int]) -> dict[float, float]:
    """Correct matches over the mean keypoint count in the overlap."""
    geo = _PairGeometry(kps_a, kps_b, h, dims_a, dims_b)
    denom = 0.5 * geo.n_overlap
    if denom == 0:
        raise EmptyOverlap("no keypoints project into the shared region")
    if len(matches) == 0:
        return {float(t): 0.0 for t in thresholds}
    d = _match_distances(matches, kps_a, kps_b, h)
    return {float(t): float(np.count_nonzero(d < t) / denom)
            for t in thresholds}


def mnn_match(desc_a: np.ndarray, desc_b: np.ndarray) -> list[tuple[int, int]]:
    """Mutual-nearest-neighbor matching over Euclidean descriptor distance."""
    desc_a = np.asarray(desc_a, dtype=np.float64)
    desc_b = np.asarray(desc_b, dtype=np.float64)
    if desc_a.size == 0 or desc_b.size == 0:
        return []
    d = cdist(desc_a, desc_b)
    nn_ab = np.argmin(d, axis=1)
    nn_ba = np.argmin(d, axis=0)
    ia = np.arange(desc_a.shape[0])
    mutual = nn_ba[nn_ab] == ia
    return [(int(i), int(j)) for i, j in zip(ia[mutual], nn_ab[mutual])]


def score_histograms(kps, robustness_bins, deviation_bins,
                     max_deviation: float = np.inf,
                     min_robustness: float = 0.0):
    """Binned robustness/deviation counts after filtering.

    The robustness histogram keeps keypoints with deviation <=
    ``max_deviation``; the deviation histogram keeps keypoints with
    robustness >= ``min_robustness``. Returns (robustness counts, deviation
    counts) aligned with the given bin edges.
    """
    rob = np.array([p.robustness for p in kps], dtype=np.float64)
    dev = np.array([p.deviation for p in kps], dtype=np.float64)
    rob_counts, _ = np.histogram(rob[dev <= max_deviation],
                                 bins=robustness_bins)
    dev_counts, _ = np.histogram(dev[rob >= min_robustness],
                                 bins=deviation_bins)
    return rob_counts, dev_counts
