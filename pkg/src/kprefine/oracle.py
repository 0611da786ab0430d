"""Independent brute-force references for audits and tests.

These deliberately avoid the kernel backend and any sparsity tricks: the
negative log-likelihood is a direct double sum, and the synthetic cluster
generator retains its ground truth. They ship with the library so fits can
be audited outside the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec
from .gmm import MixtureComponent, gaussian_density
from .keypoints import Keypoint, as_xy


def nll(points, components: list[MixtureComponent]) -> float:
    """Data negative log-likelihood under the mixture, by direct summation."""
    xy = as_xy(points)
    dens = np.zeros(xy.shape[0], dtype=np.float64)
    for comp in components:
        if comp.alpha == 0.0:
            continue
        dens += comp.alpha * gaussian_density(xy, comp.mu, comp.sigma)
    with np.errstate(divide="ignore"):
        return float(np.sum(-np.log(dens)))


@dataclass(frozen=True)
class PlantSpec:
    """Synthetic point-set description: Gaussian clusters plus outliers.

    Every cluster contributes one member per simulated warp (warp ids
    ``0..members_per_cluster-1``); outliers are uniform over ``bounds`` with
    random warp ids.
    """

    centers: tuple[tuple[float, float], ...]
    sigmas: tuple[float, ...]
    members_per_cluster: int = 21
    n_outliers: int = 0
    seed: int = 0
    n_warps: int = 21
    bounds: tuple[float, float] = (256.0, 256.0)

    def __post_init__(self):
        if len(self.centers) != len(self.sigmas):
            raise InvalidSpec("centers and sigmas must have equal length")
        if self.members_per_cluster < 1:
            raise InvalidSpec("members_per_cluster must be >= 1")
        if self.members_per_cluster > self.n_warps:
            raise InvalidSpec("members_per_cluster exceeds simulated warps")
        if self.n_outliers < 0:
            raise InvalidSpec("n_outliers must be >= 0")
        if any(s <= 0 for s in self.sigmas):
            raise InvalidSpec("cluster sigmas must be > 0")


def plant_clusters(spec: PlantSpec):
    """Deterministic synthetic point set with ground truth.

    Returns ``(points, labels)`` where ``labels[i]`` is the cluster index of
    point i, or -1 for outliers.
    """
    rng = np.random.default_rng(spec.seed)
    points: list[Keypoint] = []
    labels: list[int] = []
    for g, (center, sigma) in enumerate(zip(spec.centers, spec.sigmas)):
        offsets = rng.normal(0.0, sigma, size=(spec.members_per_cluster, 2))
        for wid in range(spec.members_per_cluster):
            points.append(Keypoint(
                float(center[0] + offsets[wid, 0]),
                float(center[1] + offsets[wid, 1]),
                score=1.0, warp_id=wid))
            labels.append(g)
    for _ in range(spec.n_outliers):
        pos = rng.uniform((0.0, 0.0), spec.bounds)
        wid = int(rng.integers(0, spec.n_warps))
        points.append(Keypoint(float(pos[0]), float(pos[1]),
                               score=1.0, warp_id=wid))
        labels.append(-1)
    return points, np.array(labels, dtype=np.int64)
