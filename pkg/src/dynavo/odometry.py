"""Frame-to-frame RGB-D pose estimation.

Stable matched pairs are back-projected through the depth images of both
frames and aligned with a robust closed-form rigid fit; the recovered
relative transform extends the camera trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .epipolar import ArityError, DegeneracyError, EstimationFailureError
from .features import MatchedPair
from .pose import PoseSE3
from .tum_io import Trajectory, TrajectoryFormatError


class InvalidDepthError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


def load_intrinsics(path: str) -> tuple[CameraIntrinsics, float]:
    """Parse a key-value intrinsics file with fx, fy, cx, cy, depth_scale."""
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, val = line.split()[:2]
            values[key] = float(val)
    k = CameraIntrinsics(values["fx"], values["fy"], values["cx"], values["cy"])
    return k, values.get("depth_scale", 5000.0)


def backproject(p, depth_m: float, k: CameraIntrinsics) -> np.ndarray:
    """Pinhole inverse: pixel + metric depth -> camera-frame 3D point."""
    if not depth_m > 0:
        raise InvalidDepthError(f"depth must be positive, got {depth_m}")
    u, v = float(p[0]), float(p[1])
    return np.array(
        [(u - k.cx) * depth_m / k.fx, (v - k.cy) * depth_m / k.fy, depth_m]
    )


def backproject_many(pts_uv: np.ndarray, depths_m: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    pts_uv = np.asarray(pts_uv, dtype=float).reshape(-1, 2)
    depths_m = np.asarray(depths_m, dtype=float)
    x = (pts_uv[:, 0] - k.cx) * depths_m / k.fx
    y = (pts_uv[:, 1] - k.cy) * depths_m / k.fy
    return np.column_stack([x, y, depths_m])


def umeyama_align(src: np.ndarray, dst: np.ndarray, allow_degenerate: bool = False) -> PoseSE3:
    """Closed-form rigid transform (scale 1) minimizing sum ||dst - (R src + t)||^2.

    Cross-covariance SVD with determinant-sign correction so det(R) = +1.
    Collinear sources leave the rotation underdetermined and raise, unless
    allow_degenerate is set (trajectory alignment on straight paths still
    needs a valid minimizer).
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if len(src) != len(dst):
        raise ArityError(f"point count mismatch: {len(src)} vs {len(dst)}")
    if len(src) < 3:
        raise ArityError(f"need >= 3 points, got {len(src)}")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cs = src - mu_s
    cd = dst - mu_d
    cov = cd.T @ cs / len(src)
    u, s, vt = np.linalg.svd(cov)
    # collinear/degenerate clouds leave the rotation underdetermined
    if not allow_degenerate and s[1] < 1e-12 * max(s[0], 1e-300):
        raise DegeneracyError("source points are collinear or coincident")
    d = np.sign(np.linalg.det(u @ vt))
    corr = np.diag([1.0, 1.0, d])
    r = u @ corr @ vt
    t = mu_d - r @ mu_s
    return PoseSE3.from_rt(r, t)


def ransac_rigid_pose(
    src: np.ndarray,
    dst: np.ndarray,
    inlier_dist_m: float = 0.05,
    max_iters: int = 200,
    seed: int = 0,
) -> tuple[PoseSE3, np.ndarray]:
    """Robust rigid alignment: 3-point hypotheses scored by 3D residual.

    Returns the refit on the best inlier set plus the inlier flags.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    n = len(src)
    if n < 3 or len(dst) != n:
        raise ArityError(f"need >= 3 matched 3D pairs, got {n}")
    rng = np.random.default_rng(seed)
    best_inliers = None
    best_count = 0
    best_err = np.inf
    for _ in range(max_iters):
        idx = rng.choice(n, size=3, replace=False)
        try:
            pose = umeyama_align(src[idx], dst[idx])
        except DegeneracyError:
            continue
        res = np.linalg.norm(dst - pose.apply(src), axis=1)
        inliers = res < inlier_dist_m
        count = int(inliers.sum())
        err = float(res[inliers].sum())
        if count > best_count or (count == best_count and err < best_err):
            best_count, best_err, best_inliers = count, err, inliers
        if count == n:
            break
    if best_inliers is None or best_count < 3:
        raise EstimationFailureError(f"best rigid model has {best_count} inliers (< 3)")
    pose = umeyama_align(src[best_inliers], dst[best_inliers])
    return pose, best_inliers


def pairs_to_3d(
    pairs: list[MatchedPair],
    prev_depth_m: np.ndarray,
    cur_depth_m: np.ndarray,
    k: CameraIntrinsics,
) -> tuple[np.ndarray, np.ndarray, list[MatchedPair]]:
    """Back-project matched pairs in both frames, dropping invalid depth.

    Depth is read at the nearest pixel. Returns (cur_points, prev_points,
    used_pairs): src = current frame, dst = previous frame, so the aligned
    transform is the current camera's pose in the previous camera's frame.
    """
    src, dst, used = [], [], []
    h, w = prev_depth_m.shape
    for pair in pairs:
        u1, v1 = int(round(pair.p1[0])), int(round(pair.p1[1]))
        u2, v2 = int(round(pair.p2[0])), int(round(pair.p2[1]))
        if not (0 <= u1 < w and 0 <= v1 < h and 0 <= u2 < w and 0 <= v2 < h):
            continue
        d1 = prev_depth_m[v1, u1]
        d2 = cur_depth_m[v2, u2]
        if not (np.isfinite(d1) and np.isfinite(d2) and d1 > 0 and d2 > 0):
            continue
        dst.append(backproject(pair.p1, float(d1), k))
        src.append(backproject(pair.p2, float(d2), k))
        used.append(pair)
    return (
        np.array(src, dtype=float).reshape(-1, 3),
        np.array(dst, dtype=float).reshape(-1, 3),
        used,
    )


def advance_trajectory(traj: Trajectory | None, relative: PoseSE3, timestamp: float) -> Trajectory:
    """Append pose(prev) ∘ relative; an empty/None trajectory starts at identity."""
    if traj is None or len(traj) == 0:
        return Trajectory(np.array([timestamp]), (PoseSE3.identity(),))
    if timestamp <= traj.timestamps[-1]:
        raise TrajectoryFormatError(
            f"timestamp {timestamp} not after {traj.timestamps[-1]}"
        )
    new_pose = traj.poses[-1].compose(relative)
    return Trajectory(
        np.append(traj.timestamps, timestamp), traj.poses + (new_pose,)
    )


@dataclass(frozen=True)
class KeyframeThresholds:
    translation_m: float = 0.1
    rotation_deg: float = 10.0
    max_gap_frames: int = 30


@dataclass
class Keyframe:
    frame_id: int
    pose: PoseSE3  # camera-to-world
    depth_m: np.ndarray
    mask: object = None  # LabelMask or None
    verdicts: list = field(default_factory=list)


def select_keyframe(
    last_kf: Keyframe | None,
    current_pose: PoseSE3,
    frame_id: int,
    thresholds: KeyframeThresholds = KeyframeThresholds(),
) -> bool:
    """Keyframe when motion or frame gap since the last keyframe is large enough."""
    if last_kf is None:
        return True
    rel = last_kf.pose.inverse().compose(current_pose)
    if np.linalg.norm(rel.translation) > thresholds.translation_m:
        return True
    if math.degrees(rel.rotation_angle()) > thresholds.rotation_deg:
        return True
    return frame_id - last_kf.frame_id >= thresholds.max_gap_frames
