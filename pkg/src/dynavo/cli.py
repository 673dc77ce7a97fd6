"""Command-line interface.

Subcommands:
  run               process a TUM-layout dataset, write trajectory + report
  eval              ATE/RPE tables for an estimated vs ground-truth trajectory
  map-export        run the pipeline and export the semantic map (PLY + ASCII)
  costmap           run the pipeline and export the projected 2D cost map (PGM)
  synth             generate a synthetic RGB-D dataset with ground truth
  reproduce-tables  recompute the published improvement percentages
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import evaluation, pipeline, published_results, synthbench, tum_io
from .epipolar import MotionCheckConfig
from .octomap import MapConfig, export_ascii, export_ply, project_costmap, write_costmap_pgm
from .odometry import KeyframeThresholds, load_intrinsics
from .pipeline import FeatureConfig, PipelineConfig, run_pipeline, write_report
from .rejection import RejectionConfig

# --config file keys -> (sub-config attribute, field)
_CONFIG_KEYS = {
    "max_count": ("features", "max_count", int),
    "quality": ("features", "quality", float),
    "min_distance": ("features", "min_distance", float),
    "window": ("features", "window", int),
    "num_levels": ("features", "num_levels", int),
    "edge_margin": ("features", "edge_margin", int),
    "patch_diff_max": ("features", "patch_diff_max", float),
    "epsilon": ("motion", "epsilon", float),
    "ransac_threshold": ("motion", "ransac_threshold", float),
    "ransac_max_iters": ("motion", "ransac_max_iters", int),
    "ransac_confidence": ("motion", "ransac_confidence", float),
    "moving_min_points": ("rejection", "moving_min_points", int),
    "resolution": ("map", "resolution", float),
    "tau_hit": ("map", "tau_hit", float),
    "tau_miss": ("map", "tau_miss", float),
    "l_min": ("map", "l_min", float),
    "l_max": ("map", "l_max", float),
    "occupancy_threshold": ("map", "occupancy_threshold", float),
    "raycast_free_space": ("map", "raycast_free_space", lambda s: s.lower() in ("1", "true", "yes")),
    "kf_translation_m": ("keyframe", "translation_m", float),
    "kf_rotation_deg": ("keyframe", "rotation_deg", float),
    "kf_max_gap_frames": ("keyframe", "max_gap_frames", int),
    "rigid_inlier_dist_m": (None, "rigid_inlier_dist_m", float),
    "rigid_max_iters": (None, "rigid_max_iters", int),
    "map_stride": (None, "map_stride", int),
    "depth_scale": (None, "depth_scale", float),
}


class UsageError(SystemExit):
    pass


def _apply_config_file(cfg: PipelineConfig, path: str) -> PipelineConfig:
    sub_updates: dict[str, dict] = {}
    top_updates: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise SystemExit(f"{path}:{lineno}: expected 'key value'")
            key, raw = parts
            if key not in _CONFIG_KEYS:
                raise SystemExit(f"{path}:{lineno}: unknown config key {key!r}")
            sub, fieldname, conv = _CONFIG_KEYS[key]
            value = conv(raw)
            if sub is None:
                top_updates[fieldname] = value
            else:
                sub_updates.setdefault(sub, {})[fieldname] = value
    for sub, updates in sub_updates.items():
        top_updates[sub] = dataclasses.replace(getattr(cfg, sub), **updates)
    return dataclasses.replace(cfg, **top_updates)


def _build_pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig(dataset=args.dataset)
    if args.intrinsics:
        k, depth_scale = load_intrinsics(args.intrinsics)
        cfg = dataclasses.replace(cfg, intrinsics=k, depth_scale=depth_scale)
    if args.masks:
        cfg = dataclasses.replace(cfg, masks_dir=args.masks)
    if args.config:
        cfg = _apply_config_file(cfg, args.config)
    cfg = dataclasses.replace(
        cfg,
        dynamic_filter=not args.no_dynamic_filter,
        seed=args.seed,
        max_frames=args.max_frames,
    )
    return cfg


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="TUM-layout dataset directory")
    p.add_argument("--masks", help="label mask directory (default <dataset>/masks)")
    p.add_argument("--intrinsics", help="key-value intrinsics file (fx fy cx cy depth_scale)")
    p.add_argument("--config", help="key-value file overriding pipeline defaults")
    p.add_argument("--no-dynamic-filter", action="store_true",
                   help="baseline mode: skip semantic rejection entirely")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-frames", type=int, default=None)


def cmd_run(args) -> int:
    cfg = _build_pipeline_config(args)
    report = run_pipeline(cfg)
    write_report(report, args.out)
    timing = report.mean_timing_ms()
    print(f"processed {len(report.frames)} frames, {report.keyframes} keyframes, "
          f"{report.lost_frames} lost")
    print(f"occupied voxels: {report.occupied_voxels}")
    for stage, ms in timing.items():
        print(f"mean {stage}: {ms:.2f} ms")
    print(f"outputs written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    est = tum_io.parse_trajectory_file(args.est)
    gt = tum_io.parse_trajectory_file(args.gt)
    ate_series, ate_stamps = evaluation.ate_error_series(est, gt, args.max_diff)
    ate = evaluation.MetricStats.from_series(ate_series)
    print("ATE (m):")
    print(f"  rmse {ate.rmse:.4f}  mean {ate.mean:.4f}  median {ate.median:.4f}  "
          f"sd {ate.sd:.4f}")
    try:
        (rpe_t, rpe_r), rpe_stamps = evaluation.rpe_error_series(
            est, gt, args.rpe_delta, args.max_diff
        )
        st = evaluation.MetricStats.from_series(rpe_t)
        sr = evaluation.MetricStats.from_series(rpe_r)
        print(f"RPE translational (m/s), delta={args.rpe_delta}s:")
        print(f"  rmse {st.rmse:.4f}  mean {st.mean:.4f}  median {st.median:.4f}  "
              f"sd {st.sd:.4f}")
        print(f"RPE rotational (deg/s), delta={args.rpe_delta}s:")
        print(f"  rmse {sr.rmse:.4f}  mean {sr.mean:.4f}  median {sr.median:.4f}  "
              f"sd {sr.sd:.4f}")
    except evaluation.InsufficientOverlapError as exc:
        print(f"RPE skipped: {exc}")
    if args.ate_series:
        evaluation.write_error_series(ate_stamps, ate_series, args.ate_series)
        print(f"ATE series written to {args.ate_series}")
    return 0


def cmd_map_export(args) -> int:
    cfg = _build_pipeline_config(args)
    report = run_pipeline(cfg)
    base = args.out
    n = export_ply(report.map, base + ".ply")
    export_ascii(report.map, base + ".txt")
    print(f"exported {n} occupied voxels to {base}.ply and {base}.txt")
    return 0


def cmd_costmap(args) -> int:
    cfg = _build_pipeline_config(args)
    report = run_pipeline(cfg)
    costmap = project_costmap(report.map, args.z_min, args.z_max)
    write_costmap_pgm(costmap, args.out)
    occ = int(costmap.grid.sum()) if costmap.grid.size else 0
    print(f"cost map {costmap.grid.shape[1]}x{costmap.grid.shape[0]} "
          f"({occ} occupied cells) written to {args.out}")
    return 0


def cmd_synth(args) -> int:
    if args.preset == "moving":
        spec = synthbench.moving_object_spec(seed=args.seed, num_frames=args.frames)
    else:
        spec = synthbench.static_scene_spec(seed=args.seed, num_frames=args.frames)
    frames, traj = synthbench.generate_scene(spec)
    synthbench.write_as_tum(frames, traj, args.out)
    k = spec.intrinsics
    with open(f"{args.out}/intrinsics.txt", "w") as fh:
        fh.write(f"fx {k.fx}\nfy {k.fy}\ncx {k.cx}\ncy {k.cy}\n"
                 f"depth_scale {spec.depth_scale}\n")
    print(f"wrote {len(frames)} frames to {args.out} "
          f"({'moving object' if args.preset == 'moving' else 'static scene'})")
    return 0


def cmd_reproduce_tables(args) -> int:
    cells = published_results.reproduce_improvement_tables()
    print(published_results.format_reproduction_report(cells), end="")
    return 0 if all(c.ok for c in cells) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynavo",
        description="Dynamic-environment RGB-D visual odometry and semantic mapping",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the pipeline on a dataset")
    _add_pipeline_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="evaluate an estimated trajectory")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--rpe-delta", type=float, default=1.0)
    p.add_argument("--max-diff", type=float, default=0.02)
    p.add_argument("--ate-series", help="write per-frame ATE errors to this file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("map-export", help="run and export the semantic map")
    _add_pipeline_args(p)
    p.add_argument("--out", required=True, help="output basename (.ply/.txt appended)")
    p.set_defaults(func=cmd_map_export)

    p = sub.add_parser("costmap", help="run and export the 2D cost map")
    _add_pipeline_args(p)
    p.add_argument("--out", required=True, help="output PGM path")
    p.add_argument("--z-min", type=float, default=-1.0)
    p.add_argument("--z-max", type=float, default=1.0)
    p.set_defaults(func=cmd_costmap)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=("static", "moving"), default="moving")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reproduce-tables",
                       help="recompute published improvement percentages")
    p.set_defaults(func=cmd_reproduce_tables)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
