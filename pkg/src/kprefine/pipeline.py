"""Per-image refinement pipeline and its configuration document.

Stage order: build augmentation set -> render warps + noise -> detect (or
ingest external per-warp keypoints) -> back-project -> per-warp NMS ->
pool -> KDE seeding -> robust GMM fit -> scoring -> ranking. The whole
pipeline is deterministic for a fixed config and noise seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml
from scipy import ndimage

from . import aggregate, detect, gmm, kde, warp
from .errors import InvalidConfig, PipelineStageError
from .geometry import (AffineTransform, AugmentationSet, WarpConfig,
                       anchor_to_image, build_augmentation_set)
from .keypoints import Keypoint


@dataclass(frozen=True)
class PipelineConfig:
    warp: WarpConfig = WarpConfig()
    detector: detect.DetectorConfig = detect.DetectorConfig()
    kde: kde.KdeConfig = kde.KdeConfig()
    gmm: gmm.GmmConfig = gmm.GmmConfig()
    nms_radius: float = 1.5
    noise_sigma: float = 0.004
    noise_seed: int = 0
    ranking: str = "robustness_then_deviation"

    def candidate_cap(self) -> int:
        if self.kde.max_candidates is not None:
            return self.kde.max_candidates
        return 2 * self.detector.n_kpts


def _cfg_from_mapping(data: dict) -> PipelineConfig:
    def sub(name, cls, **casts):
        raw = data.get(name, {}) or {}
        if not isinstance(raw, dict):
            raise InvalidConfig(f"section {name!r} must be a mapping")
        kwargs = {}
        for key, value in raw.items():
            cast = casts.get(key)
            kwargs[key] = cast(value) if (cast and value is not None) else value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"section {name!r}: {exc}") from exc

    cfg = PipelineConfig(
        warp=sub("warp", WarpConfig, iso_scales=tuple, aniso_scales=tuple,
                 shears=tuple),
        detector=sub("detector", detect.DetectorConfig),
        kde=sub("kde", kde.KdeConfig),
        gmm=sub("gmm", gmm.GmmConfig),
        nms_radius=float(data.get("nms_radius", 1.5)),
        noise_sigma=float(data.get("noise_sigma", 0.004)),
        noise_seed=int(data.get("noise_seed", 0)),
        ranking=str(data.get("ranking", "robustness_then_deviation")),
    )
    if cfg.ranking not in gmm.RANKING_POLICIES:
        raise InvalidConfig(f"unknown ranking policy {cfg.ranking!r}")
    if cfg.nms_radius <= 0:
        raise InvalidConfig("nms_radius must be > 0")
    return cfg


def load_config(path) -> PipelineConfig:
    """Parse the YAML key-value config document."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise InvalidConfig("config document must be a mapping")
    return _cfg_from_mapping(data)


def default_config_yaml() -> str:
    """Reference config document with every default spelled out."""
    cfg = PipelineConfig()
    doc = {
        "warp": {
            "iso_scales": list(cfg.warp.iso_scales),
            "aniso_scales": list(cfg.warp.aniso_scales),
            "shears": list(cfg.warp.shears),
        },
        "detector": {
            "kind": cfg.detector.kind,
            "n_kpts": cfg.detector.n_kpts,
            "harris_k": cfg.detector.harris_k,
            "smoothing_sigma": cfg.detector.smoothing_sigma,
            "response_threshold": cfg.detector.response_threshold,
            "subpixel": cfg.detector.subpixel,
        },
        "kde": {
            "bandwidth": cfg.kde.bandwidth,
            "maxima_window_radius": cfg.kde.maxima_window_radius,
            "density_threshold": cfg.kde.density_threshold,
            "max_candidates": cfg.kde.max_candidates,
        },
        "gmm": {
            "epsilon": cfg.gmm.epsilon,
            "init_sigma": cfg.gmm.init_sigma,
            "sigma_max": cfg.gmm.sigma_max,
            "nu": cfg.gmm.nu,
            "phase1_iters": cfg.gmm.phase1_iters,
            "phase2_iters": cfg.gmm.phase2_iters,
            "convergence_tol": cfg.gmm.convergence_tol,
        },
        "nms_radius": cfg.nms_radius,
        "noise_sigma": cfg.noise_sigma,
        "noise_seed": cfg.noise_seed,
        "ranking": cfg.ranking,
    }
    return yaml.safe_dump(doc, sort_keys=False)


@dataclass
class WarpedView:
    """One rendered augmentation: image, full transform, canvas size."""

    warp_id: int
    label: str
    image: np.ndarray | None
    transform: AffineTransform
    size: tuple[int, int]


def render_views(img: np.ndarray, cfg: PipelineConfig,
                 aug: AugmentationSet | None = None,
                 render: bool = True) -> list[WarpedView]:
    """Anchor every augmentation to the image; optionally render + noise.

    Noise is applied to all views, the identity included, with per-warp
    seeds derived from the configured seed.
    """
    h, w = img.shape
    if aug is None:
        aug = build_augmentation_set(cfg.warp)
    views = []
    for wid, t, label in zip(aug.ids, aug.transforms, aug.labels):
        full, out_w, out_h = anchor_to_image(t, w, h)
        rendered = None
        if render:
            rendered = warp.warp_image(img, full, (out_w, out_h))
            if cfg.noise_sigma > 0:
                rendered = warp.add_gaussian_noise(
                    rendered, cfg.noise_sigma, cfg.noise_seed + wid)
        views.append(WarpedView(wid, label, rendered, full, (out_w, out_h)))
    return views


def _detection_mask(img_shape: tuple[int, int], view: WarpedView,
                    cfg: PipelineConfig) -> np.ndarray | None:
    """Reject maxima near the zero-padding seam of a warped canvas.

    The seam produces strong fake corners; eroding the warped support by
    roughly the detector's footprint removes them. ``border_value=1`` keeps
    the true canvas border valid, so the identity view is unaffected.
    """
    h, w = img_shape
    support = warp.support_mask((w, h), view.transform, view.size)
    if support.all():
        return None
    radius = int(math.ceil(3.0 * cfg.detector.smoothing_sigma)) + 1
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_erosion(support, structure=structure,
                                  border_value=1)


def refine_image(img: np.ndarray, cfg: PipelineConfig,
                 external_kpts: dict[int, list[Keypoint]] | None = None
                 ) -> list[gmm.RefinedKeypoint]:
    """Run the full refinement pipeline on one grayscale image."""
    h, w = img.shape
    use_external = cfg.detector.kind == "external"
    if use_external and external_kpts is None:
        raise PipelineStageError(
            "detect", "detector kind 'external' needs per-warp keypoints")

    try:
        views = render_views(img, cfg, render=not use_external)
    except Exception as exc:
        raise PipelineStageError("warp", str(exc)) from exc

    per_warp: list[list[Keypoint]] = []
    for view in views:
        try:
            if use_external:
                kps = external_kpts.get(view.warp_id, [])
                kps = [Keypoint(p.x, p.y, p.score, view.warp_id, p.desc)
                       for p in kps]
            else:
                mask = _detection_mask(img.shape, view, cfg)
                kps = detect.detect(view.image, cfg.detector,
                                    warp_id=view.warp_id, valid_mask=mask)
            kps = detect.select_top_n(kps, cfg.detector.n_kpts)
        except Exception as exc:
            raise PipelineStageError(
                "detect", f"warp {view.warp_id}: {exc}") from exc
        try:
            kps = warp.backproject_keypoints(kps, view.transform, (w, h))
            kps = aggregate.nms(kps, cfg.nms_radius)
        except Exception as exc:
            raise PipelineStageError(
                "reproject", f"warp {view.warp_id}: {exc}") from exc
        per_warp.append(kps)

    pooled = aggregate.pool(per_warp)

    try:
        grid = kde.evaluate_grid(pooled, cfg.kde, (w, h))
        maxima = kde.find_local_maxima(grid, cfg.kde)
        seeds = kde.select_top_maxima(maxima, grid, cfg.candidate_cap())
    except Exception as exc:
        raise PipelineStageError("kde", str(exc)) from exc
    if not seeds:
        raise PipelineStageError("kde", "no density maxima above threshold")

    try:
        components = gmm.fit(pooled, np.asarray(seeds, dtype=np.float64),
                             cfg.gmm)
        refined = gmm.score_components(pooled, components, cfg.gmm)
    except Exception as exc:
        raise PipelineStageError("gmm", str(exc)) from exc

    return gmm.rank_refined(refined, cfg.ranking, cfg.detector.n_kpts)
