"""Robust two-phase EM fit of an isotropic Gaussian mixture.

Components are seeded at density maxima and fitted in two phases: first
with a soft outlier down-weighting (:func:`weight_w1`), then a short
localization phase that hard-ignores points outside the 3-sigma radius
(:func:`weight_w2`). After every update, variances are regularized by
``epsilon`` and clamped to ``sigma_max``, and near-coincident components
are pruned. Each surviving component is one refined keypoint: its mean is
the position, ``6 sigma`` the deviation score, and the per-warp-deduplicated
support count the robustness score.

``e_step``/``m_step`` are dense reference implementations of a single
update; :func:`fit` runs the same math through the sparse kernel backend,
pruning (point, component) pairs only at distances where the weighted
density underflows to exactly zero in double precision, so pruning is an
optimization rather than an approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _backend
from .errors import (AllComponentsDropped, EmptyPointSet, EmptySeeds)
from .keypoints import Keypoint, as_xy, warp_ids_of

WEIGHT_MODES = {"none": 0, "w1": 1, "w2": 2}

# Pair-pruning radii in sigma units. Beyond these distances the term
# alpha * w * G underflows to exactly 0.0 for sigma >= 1e-12 (the exponents
# fall below -745 after including the 1/(2 pi sigma^2) factor), so dropping
# the pair reproduces the dense computation bit-for-bit.
_PRUNE_FACTOR = {0: 42.0, 1: 32.0, 2: 3.0}

_SIGMA_FLOOR = 1e-12  # guards the plain-EM mode against exact collapse


@dataclass(frozen=True)
class GmmConfig:
    """Fit hyperparameters.

    ``init_sigma`` makes the initial 3-sigma diameter 2 px; ``sigma_max``
    caps it at 10 px. ``epsilon`` keeps variances away from zero, ``nu`` is
    the concentric-pruning distance.
    """

    epsilon: float = 0.02
    init_sigma: float = 1.0 / 3.0
    sigma_max: float = 10.0 / 6.0
    nu: float = 0.1
    phase1_iters: int = 50
    phase2_iters: int = 10
    convergence_tol: float = 1e-4

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.init_sigma > self.sigma_max:
            raise ValueError("init_sigma must not exceed sigma_max")
        if self.nu <= 0:
            raise ValueError("nu must be > 0")


@dataclass(frozen=True)
class MixtureComponent:
    """One isotropic Gaussian cluster (covariance sigma^2 I)."""

    mu: tuple[float, float]
    sigma: float
    alpha: float


@dataclass(frozen=True)
class RefinedKeypoint:
    """Refined position plus the two interpretable scores.

    ``robustness`` counts supporting points within the 3-sigma radius, at
    most one per source warp; ``deviation`` is the cluster diameter at
    3 sigma, i.e. ``6 sigma`` pixels. ``support`` lists all members inside
    the radius, before per-warp deduplication.
    """

    x: float
    y: float
    robustness: int
    deviation: float
    sigma: float
    alpha: float
    support: tuple[Keypoint, ...] = ()

    @property
    def n_support(self) -> int:
        return len(self.support)


def gaussian_density(x, mu, sigma: float):
    """Isotropic bivariate normal density (2 pi s^2)^-1 exp(-d^2 / 2 s^2)."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    d2 = np.sum((x - mu) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * sigma * sigma)) / (2.0 * np.pi * sigma * sigma)


def weight_w1(x, mu, sigma: float):
    """Soft outlier weight: 1 inside 3 sigma, Gaussian tail outside.

    The tail exponent uses (d - 3 sigma)^2 so the weight is continuous at
    the plateau boundary for every sigma.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    d = np.sqrt(np.sum((x - mu) ** 2, axis=-1))
    tail = d - 3.0 * sigma
    return np.where(d < 3.0 * sigma, 1.0,
                    np.exp(-(tail * tail) / (2.0 * sigma * sigma)))


def weight_w2(x, mu, sigma: float):
    """Hard cut: 1 iff strictly inside the 3-sigma radius, else 0."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    d2 = np.sum((x - mu) ** 2, axis=-1)
    return (d2 < 9.0 * sigma * sigma).astype(np.float64)


def e_step(points, components: list[MixtureComponent],
           weight_fn=None) -> np.ndarray:
    """Dense responsibilities, shape (K, N).

    Each column sums to 1 except for inert points whose weighted density
    underflows under every component; those columns are all zero and the
    points do not take part in the following update.
    """
    xy = as_xy(points)
    n = xy.shape[0]
    k = len(components)
    numer = np.empty((k, n), dtype=np.float64)
    for j, comp in enumerate(components):
        g = gaussian_density(xy, comp.mu, comp.sigma)
        w = 1.0 if weight_fn is None else weight_fn(xy, comp.mu, comp.sigma)
        numer[j] = comp.alpha * w * g
    denom = numer.sum(axis=0)
    safe = denom > 0.0
    gamma = np.zeros_like(numer)
    gamma[:, safe] = numer[:, safe] / denom[safe]
    return gamma


def m_step(points, resp: np.ndarray,
           cfg: GmmConfig = GmmConfig()) -> list[MixtureComponent]:
    """One maximization update from dense responsibilities.

    Components with zero responsibility mass are degenerate and dropped.
    Variances are the responsibility-weighted mean squared distances to the
    updated means, regularized by ``epsilon`` and clamped at ``sigma_max``.
    """
    xy = as_xy(points)
    n = xy.shape[0]
    out = []
    for row in resp:
        mass = row.sum()
        if mass == 0.0:
            continue
        mu = (row @ xy) / mass
        d2 = np.sum((xy - mu) ** 2, axis=1)
        sigma_tilde = np.sqrt((row @ d2) / mass)
        sigma = min(sigma_tilde + cfg.epsilon, cfg.sigma_max)
        out.append(MixtureComponent((float(mu[0]), float(mu[1])),
                                    float(sigma), float(mass / n)))
    return out


def drop_concentric(components: list[MixtureComponent],
                    nu: float) -> list[MixtureComponent]:
    """Prune near-coincident components.

    Index pairs (k, l), k < l, are scanned in ascending order; whenever both
    are still alive and their means are closer than ``nu``, the lower-index
    component is discarded. Remaining weights are renormalized to sum to 1
    when anything was dropped.
    """
    k = len(components)
    alive = [True] * k
    dropped = False
    for i in range(k):
        if not alive[i]:
            continue
        for j in range(i + 1, k):
            if not alive[j]:
                continue
            dx = components[i].mu[0] - components[j].mu[0]
            dy = components[i].mu[1] - components[j].mu[1]
            if dx * dx + dy * dy < nu * nu:
                alive[i] = False
                dropped = True
                break
    kept = [c for c, a in zip(components, alive) if a]
    if dropped and kept:
        total = sum(c.alpha for c in kept)
        if total > 0:
            kept = [MixtureComponent(c.mu, c.sigma, c.alpha / total)
                    for c in kept]
    return kept


def _concentric_mask(mux, muy, nu: float) -> np.ndarray:
    """Vectorized pruning mask with the same scan order as drop_concentric."""
    k = mux.shape[0]
    alive = np.ones(k, dtype=bool)
    if k < 2:
        return alive
    tree = cKDTree(np.column_stack([mux, muy]))
    cand = tree.query_pairs(nu, output_type="ndarray")
    if cand.size == 0:
        return alive
    cand = cand[np.lexsort((cand[:, 1], cand[:, 0]))]
    nu2 = nu * nu
    for i, j in cand:
        if alive[i] and alive[j]:
            d2 = (mux[i] - mux[j]) ** 2 + (muy[i] - muy[j]) ** 2
            if d2 < nu2:
                alive[i] = False
    return alive


def _build_pairs(tree: cKDTree, mux, muy, sigma, mode: int):
    radii = _PRUNE_FACTOR[mode] * sigma
    lists = tree.query_ball_point(np.column_stack([mux, muy]), radii,
                                  workers=1, return_sorted=True)
    lens = np.fromiter((len(l) for l in lists), dtype=np.int64,
                       count=len(lists))
    pair_comp = np.repeat(np.arange(len(lists), dtype=np.int64), lens)
    if pair_comp.size == 0:
        return np.empty(0, dtype=np.int64), pair_comp
    pair_pt = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists
                              if len(l)])
    return pair_pt, pair_comp


class _State:
    """Mutable component arrays during fitting."""

    __slots__ = ("mux", "muy", "sigma", "alpha")

    def __init__(self, mux, muy, sigma, alpha):
        self.mux, self.muy, self.sigma, self.alpha = mux, muy, sigma, alpha

    def components(self) -> list[MixtureComponent]:
        return [MixtureComponent((float(x), float(y)), float(s), float(a))
                for x, y, s, a in zip(self.mux, self.muy, self.sigma,
                                      self.alpha)]


def _iterate(px, py, tree, st: _State, mode: int, cfg: GmmConfig,
             robust: bool):
    """One EM update in place; returns (max mean shift, any component drop)."""
    k = st.mux.shape[0]
    pair_pt, pair_comp = _build_pairs(tree, st.mux, st.muy, st.sigma, mode)
    numer, denom = _backend.em_pair_terms(
        px, py, st.mux, st.muy, st.sigma, st.alpha, pair_pt, pair_comp, mode)
    n_active = int(np.count_nonzero(denom > 0.0))
    if n_active == 0:
        raise AllComponentsDropped("no point supports any component")

    gsum, gx, gy = _backend.em_moments(px, py, numer, denom,
                                       pair_pt, pair_comp, k)
    safe = gsum > 0.0
    gsum_div = np.where(safe, gsum, 1.0)
    new_mux = np.where(safe, gx / gsum_div, st.mux)
    new_muy = np.where(safe, gy / gsum_div, st.muy)
    gd2 = _backend.em_spread(px, py, numer, denom, pair_pt, pair_comp,
                             new_mux, new_muy, k)
    sigma_tilde = np.sqrt(np.where(safe, gd2 / gsum_div, 0.0))
    new_alpha = gsum / n_active

    if robust:
        new_sigma = np.minimum(sigma_tilde + cfg.epsilon, cfg.sigma_max)
        keep_idx = np.nonzero(safe)[0]
        if keep_idx.size == 0:
            raise AllComponentsDropped("every component lost its support")
        alive = _concentric_mask(new_mux[keep_idx], new_muy[keep_idx], cfg.nu)
        keep_idx = keep_idx[alive]
        if keep_idx.size == 0:
            raise AllComponentsDropped("every component merged away")
        changed = keep_idx.size != k
        shift = float(np.max(np.hypot(new_mux[keep_idx] - st.mux[keep_idx],
                                      new_muy[keep_idx] - st.muy[keep_idx])))
        alpha = new_alpha[keep_idx]
        if changed:
            alpha = alpha / alpha.sum()
        st.mux = np.ascontiguousarray(new_mux[keep_idx])
        st.muy = np.ascontiguousarray(new_muy[keep_idx])
        st.sigma = np.ascontiguousarray(new_sigma[keep_idx])
        st.alpha = np.ascontiguousarray(alpha)
        return shift, changed

    # Plain-EM mode: no regularization, no clamp, no pruning. Zero-mass
    # components keep their stale parameters at alpha = 0, which leaves the
    # likelihood untouched and preserves the EM monotonicity guarantee.
    # The variance here is the exact 2-D maximizer (mean squared distance
    # over two coordinates); only that update carries the guarantee.
    new_sigma = np.where(safe,
                         np.maximum(sigma_tilde / np.sqrt(2.0), _SIGMA_FLOOR),
                         st.sigma)
    shift = float(np.max(np.hypot(new_mux - st.mux, new_muy - st.muy)))
    st.mux, st.muy = new_mux, new_muy
    st.sigma = new_sigma
    st.alpha = new_alpha
    return shift, False


def fit(points, seeds, cfg: GmmConfig = GmmConfig(), mode: str = "robust",
        history: list | None = None) -> list[MixtureComponent]:
    """Fit the mixture from seed positions.

    ``mode="robust"`` runs the two-phase procedure: soft down-weighting
    until the means move less than ``convergence_tol`` (or ``phase1_iters``
    is reached), then ``phase2_iters`` localization iterations with the hard
    3-sigma cut. Concentric pruning runs after every update in both phases.

    ``mode="standard"`` runs plain EM (w == 1, no variance regularization or
    clamping, no pruning) for diagnostics and ablations; it preserves the
    textbook guarantee that the data negative log-likelihood never
    increases.

    Inputs are canonicalized internally (points and seeds sorted by (y, x)),
    so the result is invariant to permutations of either list. ``history``,
    when given, receives a component snapshot before the first and after
    every iteration.
    """
    if mode not in ("robust", "standard"):
        raise ValueError(f"unknown fit mode {mode!r}")
    robust = mode == "robust"

    xy = as_xy(points)
    if xy.shape[0] == 0:
        raise EmptyPointSet("cannot fit a mixture to zero points")
    seed_xy = as_xy(seeds)
    if seed_xy.shape[0] == 0:
        raise EmptySeeds("mixture fit needs at least one seed")

    xy = xy[np.lexsort((xy[:, 0], xy[:, 1]))]
    seed_xy = seed_xy[np.lexsort((seed_xy[:, 0], seed_xy[:, 1]))]
    px = np.ascontiguousarray(xy[:, 0])
    py = np.ascontiguousarray(xy[:, 1])
    tree = cKDTree(xy)

    k = seed_xy.shape[0]
    st = _State(
        np.ascontiguousarray(seed_xy[:, 0]),
        np.ascontiguousarray(seed_xy[:, 1]),
        np.full(k, float(cfg.init_sigma)),
        np.full(k, 1.0 / k),
    )
    if history is not None:
        history.append(st.components())

    for _ in range(cfg.phase1_iters):
        shift, changed = _iterate(px, py, tree, st, 1 if robust else 0,
                                  cfg, robust)
        if history is not None:
            history.append(st.components())
        if not changed and shift < cfg.convergence_tol:
            break

    if robust:
        for _ in range(cfg.phase2_iters):
            _iterate(px, py, tree, st, 2, cfg, robust)
            if history is not None:
                history.append(st.components())

    return st.components()


def score_components(points, components: list[MixtureComponent],
                     cfg: GmmConfig = GmmConfig()) -> list[RefinedKeypoint]:
    """Attach robustness and deviation scores to fitted components.

    Robustness counts the support points strictly inside the 3-sigma
    radius, keeping at most one per warp id (the nearest wins, so a cluster
    that swallowed two detections from one warped image is not counted
    twice). When ``points`` carries no warp ids every point counts as its
    own warp. Deviation is ``6 sigma``.
    """
    xy = as_xy(points)
    wids = warp_ids_of(points)
    if wids is None:
        wids = np.arange(xy.shape[0], dtype=np.int64)
    is_kp = len(points) > 0 and isinstance(points[0], Keypoint)

    out = []
    if xy.shape[0] == 0:
        tree = None
    else:
        tree = cKDTree(xy)
    for comp in components:
        mu = np.asarray(comp.mu)
        members: list[int] = []
        if tree is not None:
            cand = tree.query_ball_point(mu, 3.0 * comp.sigma, workers=1,
                                         return_sorted=True)
            d = np.sqrt(np.sum((xy[cand] - mu) ** 2, axis=1)) if cand else \
                np.empty(0)
            members = [i for i, di in zip(cand, d)
                       if di < 3.0 * comp.sigma]

        best: dict[int, tuple] = {}
        support = []
        for i in members:
            if is_kp:
                support.append(points[i])
            else:
                support.append(Keypoint(float(xy[i, 0]), float(xy[i, 1]),
                                        0.0, int(wids[i])))
            di = float(np.hypot(xy[i, 0] - mu[0], xy[i, 1] - mu[1]))
            key = (di, xy[i, 1], xy[i, 0])
            wid = int(wids[i])
            if wid not in best or key < best[wid]:
                best[wid] = key

        out.append(RefinedKeypoint(
            x=float(comp.mu[0]), y=float(comp.mu[1]),
            robustness=len(best),
            deviation=6.0 * comp.sigma,
            sigma=comp.sigma, alpha=comp.alpha,
            support=tuple(support),
        ))
    return out


RANKING_POLICIES = ("robustness_then_deviation", "deviation_then_robustness")


def rank_refined(kps: list[RefinedKeypoint], policy: str,
                 n: int) -> list[RefinedKeypoint]:
    """Stable lexicographic ranking, truncated to n entries."""
    if policy == "robustness_then_deviation":
        key = lambda p: (-p.robustness, p.deviation)
    elif policy == "deviation_then_robustness":
        key = lambda p: (p.deviation, -p.robustness)
    else:
        raise ValueError(f"unknown ranking policy {policy!r}")
    return sorted(kps, key=key)[:n]
