"""Command line interface: refine, export-warps, eval, stats.

Batch parallelism is capped by the ``KPREFINE_THREADS`` environment
variable. Each image is processed independently and writes its own output
file, so results are byte-identical regardless of the thread count.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import detect, evaluation, imgio, pipeline
from .errors import EmptyOverlap, KprefineError, PipelineStageError
from .geometry import build_augmentation_set
from .gmm import RefinedKeypoint
from .keypoints import Keypoint

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")
EVAL_THRESHOLDS = (1.0, 2.0, 3.0)
DEVIATION_CAPS = (1.0, 2.0, 3.0, float("inf"))
ROBUSTNESS_FLOORS = (5, 10, 15, 20)


def _thread_count() -> int:
    raw = os.environ.get("KPREFINE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        n = min(8, os.cpu_count() or 1)
    return n


def _collect_images(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir()
                      if p.suffix.lower() in IMAGE_SUFFIXES)
    return [path]


def _apply_overrides(cfg: pipeline.PipelineConfig, args) -> pipeline.PipelineConfig:
    detector = cfg.detector
    if args.detector or args.n_kpts:
        detector = dataclasses.replace(
            detector,
            kind=args.detector or detector.kind,
            n_kpts=args.n_kpts or detector.n_kpts,
        )
    return dataclasses.replace(
        cfg,
        detector=detector,
        noise_seed=args.seed if args.seed is not None else cfg.noise_seed,
        ranking=args.ranking or cfg.ranking,
    )


def write_refined_jsonl(kps: list[RefinedKeypoint], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in kps:
            fh.write(json.dumps({
                "x": p.x, "y": p.y,
                "robustness": p.robustness,
                "deviation": p.deviation,
                "sigma": p.sigma,
                "alpha": p.alpha,
                "n_support": p.n_support,
            }) + "\n")


def read_refined_jsonl(path) -> list[RefinedKeypoint]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(RefinedKeypoint(
                x=float(rec["x"]), y=float(rec["y"]),
                robustness=int(rec["robustness"]),
                deviation=float(rec["deviation"]),
                sigma=float(rec.get("sigma", rec["deviation"] / 6.0)),
                alpha=float(rec.get("alpha", 0.0)),
            ))
    return out


def _load_external_sets(image: Path, kpts_dir: Path,
                        n_warps: int) -> dict[int, list[Keypoint]]:
    sets = {}
    missing = []
    for wid in range(n_warps):
        path = kpts_dir / f"{image.stem}.warp{wid}.kpts.jsonl"
        if not path.exists():
            missing.append(wid)
            continue
        sets[wid] = detect.load_external_keypoints(path, wid)
    if missing:
        raise PipelineStageError(
            "detect",
            f"missing external keypoint files for warp ids {missing} "
            f"(expected '<stem>.warp<k>.kpts.jsonl' under {kpts_dir})")
    return sets


def _refine_one(image_path: Path, cfg: pipeline.PipelineConfig,
                out_dir: Path, kpts_dir: Path | None) -> Path:
    img = imgio.load_image(image_path)
    external = None
    if cfg.detector.kind == "external":
        if kpts_dir is None:
            raise PipelineStageError(
                "detect", "external detector needs --external-kpts-dir")
        n_warps = len(build_augmentation_set(cfg.warp))
        external = _load_external_sets(image_path, kpts_dir, n_warps)
    refined = pipeline.refine_image(img, cfg, external_kpts=external)
    out_path = out_dir / f"{image_path.stem}.refined.jsonl"
    write_refined_jsonl(refined, out_path)
    return out_path


def cmd_refine(args) -> int:
    cfg = pipeline.load_config(args.config) if args.config \
        else pipeline.PipelineConfig()
    cfg = _apply_overrides(cfg, args)
    images = _collect_images(Path(args.input))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kpts_dir = Path(args.external_kpts_dir) if args.external_kpts_dir else None

    failures = []

    def run(path: Path):
        try:
            out = _refine_one(path, cfg, out_dir, kpts_dir)
            print(f"refined {path} -> {out}")
        except (KprefineError, OSError) as exc:
            stage = getattr(exc, "stage", "io")
            failures.append((path, stage, exc))

    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        list(pool.map(run, images))

    for path, stage, exc in failures:
        print(f"error: {path}: stage '{stage}' failed: {exc}", file=sys.stderr)
    return 1 if failures else 0


def cmd_export_warps(args) -> int:
    cfg = pipeline.load_config(args.config) if args.config \
        else pipeline.PipelineConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, noise_seed=args.seed)
    image_path = Path(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    img = imgio.load_image(image_path)
    views = pipeline.render_views(img, cfg)
    manifest = {
        "image": image_path.name,
        "width": img.shape[1],
        "height": img.shape[0],
        "noise_sigma": cfg.noise_sigma,
        "noise_seed": cfg.noise_seed,
        "warps": [],
    }
    for view in views:
        name = f"{image_path.stem}.warp{view.warp_id}.png"
        imgio.save_image(view.image, out_dir / name)
        t = view.transform
        manifest["warps"].append({
            "id": view.warp_id,
            "label": view.label,
            "file": name,
            "width": view.size[0],
            "height": view.size[1],
            "matrix": [t.a11, t.a12, t.a21, t.a22, t.tx, t.ty],
        })
    with open(out_dir / f"{image_path.stem}.warps.json", "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"exported {len(views)} warps to {out_dir}")
    return 0


def _load_eval_kps(path: Path):
    """Keypoint positions + optional descriptors from a JSONL file."""
    xs, descs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            xs.append((float(rec["x"]), float(rec["y"])))
            descs.append(rec.get("desc"))
    xy = np.asarray(xs, dtype=np.float64).reshape(-1, 2)
    if xs and all(d is not None for d in descs):
        return xy, np.asarray(descs, dtype=np.float64)
    return xy, None


def cmd_eval(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = Path(args.manifest).parent

    rows = []
    sums: dict[tuple[str, float], list[float]] = {}
    statuses = []
    for i, entry in enumerate(entries):
        name = entry.get("name", f"pair{i}")
        try:
            kps_a, desc_a = _load_eval_kps(base / entry["kps_a"])
            kps_b, desc_b = _load_eval_kps(base / entry["kps_b"])
            h = evaluation.load_homography(base / entry["homography"])
            dims_a = (int(entry["width_a"]), int(entry["height_a"]))
            dims_b = (int(entry["width_b"]), int(entry["height_b"]))

            metrics = {
                "repeatability": evaluation.repeatability(
                    kps_a, kps_b, h, EVAL_THRESHOLDS, dims_a, dims_b),
                "repeatability_mnn": evaluation.repeatability_mnn(
                    kps_a, kps_b, h, EVAL_THRESHOLDS, dims_a, dims_b),
            }
            if desc_a is not None and desc_b is not None:
                matches = evaluation.mnn_match(desc_a, desc_b)
                mma = evaluation.mma(matches, kps_a, kps_b, h,
                                     EVAL_THRESHOLDS)
                if mma is not None:
                    metrics["mma"] = mma
                metrics["matching_score"] = evaluation.matching_score(
                    matches, kps_a, kps_b, h, EVAL_THRESHOLDS,
                    dims_a, dims_b)
            statuses.append({"pair": name, "status": "ok"})
        except EmptyOverlap:
            statuses.append({"pair": name, "status": "empty_overlap"})
            continue
        except (KprefineError, OSError, KeyError, ValueError) as exc:
            statuses.append({"pair": name, "status": f"error: {exc}"})
            print(f"warning: pair {name} failed: {exc}", file=sys.stderr)
            continue

        for metric, values in metrics.items():
            for t, v in values.items():
                rows.append((name, metric, t, v))
                sums.setdefault((metric, t), []).append(v)

    with open(out_dir / "pairs.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "metric", "threshold_px", "value"])
        writer.writerows(rows)

    summary = {
        "n_pairs": len(entries),
        "pairs": statuses,
        "mean": {
            metric: {str(t): float(np.mean(vals))
                     for (m, t), vals in sorted(sums.items()) if m == metric}
            for metric in sorted({m for m, _ in sums})
        },
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    print(f"evaluated {len(entries)} pairs -> {out_dir}")
    return 0


def cmd_stats(args) -> int:
    kps = []
    for path in args.inputs:
        kps.extend(read_refined_jsonl(path))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    max_rob = max((p.robustness for p in kps), default=21)
    rob_bins = np.arange(0, max(22, max_rob + 2)) - 0.5
    dev_bins = np.arange(0.0, 10.25 + 1e-9, 0.25)

    with open(out_dir / "robustness_hist.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["max_deviation_px", "robustness", "count"])
        for cap in DEVIATION_CAPS:
            rob_counts, _ = evaluation.score_histograms(
                kps, rob_bins, dev_bins, max_deviation=cap)
            label = "inf" if np.isinf(cap) else f"{cap:g}"
            for value, count in enumerate(rob_counts):
                writer.writerow([label, value, int(count)])

    with open(out_dir / "deviation_hist.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["min_robustness", "deviation_lo_px",
                         "deviation_hi_px", "count"])
        for floor in ROBUSTNESS_FLOORS:
            _, dev_counts = evaluation.score_histograms(
                kps, rob_bins, dev_bins, min_robustness=floor)
            for b, count in enumerate(dev_counts):
                writer.writerow([floor, f"{dev_bins[b]:g}",
                                 f"{dev_bins[b + 1]:g}", int(count)])

    print(f"wrote histograms for {len(kps)} keypoints -> {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kprefine",
        description="Keypoint refinement and scoring via warp pooling "
                    "and robust mixture fitting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="refine keypoints for image(s)")
    p.add_argument("input", help="image file or directory")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="noise seed")
    p.add_argument("--detector", choices=detect.DETECTOR_KINDS, default=None)
    p.add_argument("--external-kpts-dir", default=None,
                   help="directory of <stem>.warp<k>.kpts.jsonl files")
    p.add_argument("--n-kpts", type=int, default=None,
                   help="keypoint budget per image")
    p.add_argument("--ranking", choices=("robustness_then_deviation",
                                         "deviation_then_robustness"),
                   default=None)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("export-warps",
                       help="write warped images + transform manifest")
    p.add_argument("input", help="image file")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="noise seed")
    p.set_defaults(func=cmd_export_warps)

    p = sub.add_parser("eval", help="repeatability metrics for keypoint pairs")
    p.add_argument("manifest",
                   help="JSON list of {kps_a, kps_b, homography, "
                        "width_a, height_a, width_b, height_b}")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="score histograms of refined keypoints")
    p.add_argument("inputs", nargs="+", help="refined .jsonl files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("print-config", help="print the default YAML config")
    p.set_defaults(func=lambda a: (print(pipeline.default_config_yaml(),
                                         end=""), 0)[1])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KprefineError, OSError) as exc:
        stage = getattr(exc, "stage", None)
        if stage:
            print(f"error: stage '{stage}' failed: {exc}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
