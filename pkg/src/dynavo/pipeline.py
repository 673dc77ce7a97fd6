"""Per-frame pipeline: track -> motion check (with the mask fetch in
flight) -> semantic rejection -> pose -> keyframe -> map.

The mask request for a frame is issued before the motion check starts and
joined afterwards, so segmentation I/O overlaps the epipolar work. A frame
whose pose cannot be estimated is marked lost and holds the previous pose.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import tum_io
from .epipolar import (
    ArityError,
    DegeneracyError,
    EstimationFailureError,
    MotionCheckConfig,
    detect_dynamic_points,
)
from .features import LOST, TRACKED, detect_corners, to_grayscale
from .octomap import MapConfig, SemanticOctree, insert_keyframe_cloud
from .odometry import (
    CameraIntrinsics,
    Keyframe,
    KeyframeThresholds,
    advance_trajectory,
    pairs_to_3d,
    ransac_rigid_pose,
    select_keyframe,
)
from .pose import PoseSE3
from .rejection import RejectionConfig, classify_region_motion, reject_outliers
from .segmentation import DirectoryMaskProvider, MaskRequest, extract_regions
from .tum_io import Trajectory

TUM_FR3_INTRINSICS = CameraIntrinsics(fx=535.4, fy=539.2, cx=320.1, cy=247.6)


@dataclass(frozen=True)
class FeatureConfig:
    max_count: int = 400
    quality: float = 0.01
    min_distance: float = 8.0
    window: int = 21
    num_levels: int = 3
    edge_margin: int = 3
    patch_diff_max: float = 1000.0


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str = "."
    masks_dir: str | None = None  # defaults to <dataset>/masks when filtering is on
    intrinsics: CameraIntrinsics = TUM_FR3_INTRINSICS
    depth_scale: float = tum_io.DEFAULT_DEPTH_SCALE
    features: FeatureConfig = FeatureConfig()
    motion: MotionCheckConfig = MotionCheckConfig()
    rejection: RejectionConfig = RejectionConfig()
    map: MapConfig = MapConfig()
    keyframe: KeyframeThresholds = KeyframeThresholds()
    dynamic_filter: bool = True
    seed: int = 0
    rigid_inlier_dist_m: float = 0.05
    rigid_max_iters: int = 200
    map_stride: int = 4
    max_frames: int | None = None
    association_max_diff: float = tum_io.DEFAULT_MAX_DIFF


@dataclass
class FrameStats:
    timestamp: float
    tracked: int = 0
    filtered_survivors: int = 0
    dynamic: int = 0
    stable: int = 0
    removed: int = 0
    lost: bool = False
    is_keyframe: bool = False
    t_feature_ms: float = 0.0
    t_motion_check_ms: float = 0.0
    t_mask_fetch_ms: float = 0.0
    t_pose_ms: float = 0.0
    t_map_ms: float = 0.0


@dataclass
class RunReport:
    trajectory: Trajectory
    frames: list[FrameStats]
    map: SemanticOctree
    occupied_voxels: int = 0
    keyframes: int = 0
    lost_frames: int = 0

    def mean_timing_ms(self) -> dict:
        if not self.frames:
            return {}
        def mean(attr):
            return float(np.mean([getattr(f, attr) for f in self.frames]))
        return {
            "feature_extraction": mean("t_feature_ms"),
            "moving_consistency_check": mean("t_motion_check_ms"),
            "segmentation_fetch": mean("t_mask_fetch_ms"),
            "pose_estimation": mean("t_pose_ms"),
            "map_insertion": mean("t_map_ms"),
        }


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    index = tum_io.load_dataset_index(cfg.dataset, cfg.association_max_diff)
    if cfg.max_frames is not None:
        index = index[: cfg.max_frames]
    if len(index) < 2:
        raise ValueError(f"need >= 2 associable frames, found {len(index)}")

    provider = None
    if cfg.dynamic_filter:
        mask_dir = cfg.masks_dir or os.path.join(cfg.dataset, "masks")
        if os.path.isdir(mask_dir):
            provider = DirectoryMaskProvider(mask_dir)

    tree = SemanticOctree(cfg.map)
    motion_cfg = replace(cfg.motion, seed=cfg.seed)
    fc = cfg.features

    trajectory: Trajectory | None = None
    frames_stats: list[FrameStats] = []
    last_kf: Keyframe | None = None
    n_keyframes = 0
    n_lost = 0

    prev_gray = None
    prev_depth_m = None
    prev_points = None

    for frame_id, (ts, rgb_path, depth_path) in enumerate(index):
        rgb = tum_io.load_rgb(rgb_path)
        depth_m = tum_io.raw_depth_to_meters(
            tum_io.load_depth(depth_path, cfg.depth_scale), cfg.depth_scale
        )
        gray = to_grayscale(rgb)
        stats = FrameStats(timestamp=ts)
        frame_name = os.path.basename(rgb_path)

        mask_future = None
        if provider is not None:
            mask_future = provider.request(MaskRequest(ts, frame_name))

        if frame_id == 0:
            t0 = time.perf_counter()
            prev_points = detect_corners(gray, fc.max_count, fc.quality, fc.min_distance)
            stats.t_feature_ms = (time.perf_counter() - t0) * 1000
            trajectory = advance_trajectory(None, PoseSE3.identity(), ts)
            mask = _join_mask(mask_future, stats)
            kf = Keyframe(frame_id, trajectory.poses[-1], depth_m, mask, [])
            t0 = time.perf_counter()
            insert_keyframe_cloud(tree, kf, cfg.intrinsics, cfg.map_stride)
            stats.t_map_ms = (time.perf_counter() - t0) * 1000
            stats.is_keyframe = True
            last_kf = kf
            n_keyframes += 1
            frames_stats.append(stats)
            prev_gray, prev_depth_m = gray, depth_m
            continue

        # moving consistency check runs while the mask fetch is in flight
        lost = False
        pairs, dyn, survivors = [], None, []
        t0 = time.perf_counter()
        try:
            pairs, dyn, _ = detect_dynamic_points(
                prev_gray,
                gray,
                prev_points,
                motion_cfg,
                num_levels=fc.num_levels,
                window=fc.window,
                edge_margin=fc.edge_margin,
                patch_diff_max=fc.patch_diff_max,
            )
            survivors = [p for p in pairs if p.status == TRACKED]
        except (ArityError, EstimationFailureError, DegeneracyError):
            lost = True
        stats.t_motion_check_ms = (time.perf_counter() - t0) * 1000
        stats.tracked = sum(1 for p in pairs if p.status != LOST)
        stats.filtered_survivors = len(survivors)
        stats.dynamic = 0 if dyn is None else len(dyn)

        mask = _join_mask(mask_future, stats)

        verdicts = []
        if mask is not None and not lost:
            regions = extract_regions(mask)
            verdicts = classify_region_motion(regions, dyn, cfg.rejection)
            stable, removed = reject_outliers(survivors, verdicts, cfg.rejection)
        else:
            stable, removed = list(survivors), []
        stats.stable = len(stable)
        stats.removed = len(removed)

        relative = PoseSE3.identity()
        if not lost:
            t0 = time.perf_counter()
            try:
                src, dst, _ = pairs_to_3d(stable, prev_depth_m, depth_m, cfg.intrinsics)
                relative, _ = ransac_rigid_pose(
                    src, dst, cfg.rigid_inlier_dist_m, cfg.rigid_max_iters, cfg.seed
                )
            except (ArityError, EstimationFailureError, DegeneracyError):
                lost = True
                relative = PoseSE3.identity()
            stats.t_pose_ms = (time.perf_counter() - t0) * 1000
        stats.lost = lost
        if lost:
            n_lost += 1

        trajectory = advance_trajectory(trajectory, relative, ts)
        pose_world = trajectory.poses[-1]

        if select_keyframe(last_kf, pose_world, frame_id, cfg.keyframe):
            kf = Keyframe(frame_id, pose_world, depth_m, mask, verdicts)
            t0 = time.perf_counter()
            insert_keyframe_cloud(tree, kf, cfg.intrinsics, cfg.map_stride)
            stats.t_map_ms = (time.perf_counter() - t0) * 1000
            stats.is_keyframe = True
            last_kf = kf
            n_keyframes += 1

        # carry surviving static points forward; replenish when depleted
        t0 = time.perf_counter()
        if lost or len(stable) < fc.max_count // 2:
            existing = (
                np.array([p.p2 for p in stable]).reshape(-1, 2) if stable else None
            )
            fresh = detect_corners(
                gray, fc.max_count - len(stable), fc.quality, fc.min_distance,
                exclude=existing,
            )
            pts = [p.p2 for p in stable] + list(fresh)
            prev_points = np.array(pts, dtype=float).reshape(-1, 2)
        else:
            prev_points = np.array([p.p2 for p in stable], dtype=float)
        stats.t_feature_ms = (time.perf_counter() - t0) * 1000

        frames_stats.append(stats)
        prev_gray, prev_depth_m = gray, depth_m

    if provider is not None:
        provider.close()
    return RunReport(
        trajectory=trajectory,
        frames=frames_stats,
        map=tree,
        occupied_voxels=len(tree.occupied_keys()),
        keyframes=n_keyframes,
        lost_frames=n_lost,
    )


def _join_mask(mask_future, stats: FrameStats):
    if mask_future is None:
        return None
    t0 = time.perf_counter()
    result = mask_future.result()
    stats.t_mask_fetch_ms = (time.perf_counter() - t0) * 1000
    return result.mask


def write_report(report: RunReport, outdir: str, prefix: str = "run") -> None:
    """Trajectory (TUM format), summary key-value file, per-frame CSV series."""
    os.makedirs(outdir, exist_ok=True)
    tum_io.write_trajectory(report.trajectory, os.path.join(outdir, f"{prefix}_trajectory.txt"))
    with open(os.path.join(outdir, f"{prefix}_report.txt"), "w") as fh:
        fh.write(f"frames {len(report.frames)}\n")
        fh.write(f"keyframes {report.keyframes}\n")
        fh.write(f"lost_frames {report.lost_frames}\n")
        fh.write(f"occupied_voxels {report.occupied_voxels}\n")
        for stage, ms in report.mean_timing_ms().items():
            fh.write(f"mean_ms_{stage} {ms:.3f}\n")
    with open(os.path.join(outdir, f"{prefix}_frames.csv"), "w") as fh:
        fh.write(
            "timestamp,tracked,filtered_survivors,dynamic,stable,removed,lost,"
            "is_keyframe,t_feature_ms,t_motion_check_ms,t_mask_fetch_ms,"
            "t_pose_ms,t_map_ms\n"
        )
        for f in report.frames:
            fh.write(
                f"{f.timestamp:.6f},{f.tracked},{f.filtered_survivors},{f.dynamic},"
                f"{f.stable},{f.removed},{int(f.lost)},{int(f.is_keyframe)},"
                f"{f.t_feature_ms:.3f},{f.t_motion_check_ms:.3f},"
                f"{f.t_mask_fetch_ms:.3f},{f.t_pose_ms:.3f},{f.t_map_ms:.3f}\n"
            )
