"""Per-warp non-maximum suppression and pooling into one point set."""

from __future__ import annotations

import math
from collections import defaultdict

from .errors import MixedWarpIds
from .keypoints import Keypoint


def nms(kps: list[Keypoint], radius: float) -> list[Keypoint]:
    """Greedy suppression in descending score order.

    A keypoint is kept iff no already-kept keypoint lies strictly closer
    than ``radius``; output is sorted by descending score (ties by (y, x)).
    All inputs must share one warp id, since suppression across warps would
    defeat the pooling step.
    """
    if radius <= 0:
        raise ValueError("nms radius must be > 0")
    if not kps:
        return []
    if len({p.warp_id for p in kps}) > 1:
        raise MixedWarpIds("nms input spans multiple warp ids")

    ranked = sorted(kps, key=lambda p: (-p.score, p.y, p.x))
    r2 = radius * radius
    cell = radius
    buckets: dict[tuple[int, int], list[Keypoint]] = defaultdict(list)
    kept: list[Keypoint] = []
    for p in ranked:
        ci = math.floor(p.x / cell)
        cj = math.floor(p.y / cell)
        suppressed = False
        for bi in range(ci - 1, ci + 2):
            for bj in range(cj - 1, cj + 2):
                for q in buckets.get((bi, bj), ()):
                    if (p.x - q.x) ** 2 + (p.y - q.y) ** 2 < r2:
                        suppressed = True
                        break
                if suppressed:
                    break
            if suppressed:
                break
        if not suppressed:
            kept.append(p)
            buckets[(ci, cj)].append(p)
    return kept


def pool(per_warp: list[list[Keypoint]]) -> list[Keypoint]:
    """Concatenate per-warp keypoint lists in deterministic order.

    Ordering is by warp id then descending score; no keypoint is lost.
    """
    flat = [p for kps in per_warp for p in kps]
    flat.sort(key=lambda p: (p.warp_id, -p.score, p.y, p.x))
    return flat
