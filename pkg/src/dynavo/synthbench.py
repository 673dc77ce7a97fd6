"""Deterministic synthetic RGB-D sequences with exact ground truth.

A textured axis-aligned room (back wall, floor, ceiling, side walls) is
rendered by per-pixel ray casting; an optional rigid moving plane with a
semantic class id provides the dynamic object. The same seed always
produces bit-identical images, and every frame carries its exact pose,
depth, and label mask.

World frame = first camera frame: x right, y down, z forward (optical axis).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .pose import PoseSE3
from .segmentation import PERSON_CLASS_ID, LabelMask
from .tum_io import DEFAULT_DEPTH_SCALE, Trajectory, save_depth, write_trajectory
from .odometry import CameraIntrinsics

from PIL import Image


class SceneSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    num_frames: int = 30
    image_size: tuple = (320, 240)  # (width, height)
    intrinsics: CameraIntrinsics = CameraIntrinsics(fx=250.0, fy=250.0, cx=159.5, cy=119.5)
    depth_scale: float = DEFAULT_DEPTH_SCALE
    frame_interval: float = 1.0 / 30.0
    start_time: float = 1000.0
    # room geometry (meters, world frame)
    room_half_width: float = 1.1  # |x| of side walls
    room_half_height: float = 0.85  # |y| of floor/ceiling
    room_depth: float = 3.0  # z of the back wall
    # camera motion per frame
    camera_velocity: tuple = (0.01, 0.0, 0.0)
    camera_rotvec_velocity: tuple = (0.0, 0.0, 0.0)  # rotation vector per frame, radians
    # moving object: textured plane parallel to the image at z = object_z
    object_enabled: bool = False
    object_class_id: int = PERSON_CLASS_ID
    object_size: tuple = (0.7, 0.6)  # (width, height) meters
    object_z: float = 1.5
    object_start: tuple = (0.0, 0.0)  # center (x, y) at frame 0
    object_velocity: tuple = (0.0, 0.03, 0.0)  # meters per frame
    object_bounce_amplitude: float = 0.4  # fold the path into +/- this offset; 0 = linear
    # texture
    texture_base_period: float = 0.35  # meters, halved per octave
    texture_octaves: int = 3
    object_texture_period: float = 0.12  # finer: the object sits closer to the camera
    # optional noise knobs (default off)
    depth_noise_sigma: float = 0.0  # meters

    def validate(self) -> None:
        if self.num_frames < 1:
            raise SceneSpecError("num_frames must be >= 1")
        if min(self.room_half_width, self.room_half_height, self.room_depth) <= 0:
            raise SceneSpecError("room extents must be positive")
        if self.object_enabled and not 0 < self.object_z < self.room_depth:
            raise SceneSpecError("object must sit between camera and back wall")
        if self.image_size[0] < 16 or self.image_size[1] < 16:
            raise SceneSpecError("image too small")


@dataclass
class SyntheticFrameBundle:
    timestamp: float
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) uint16
    mask: LabelMask
    pose: PoseSE3  # camera-to-world, exact
    object_pixels: np.ndarray  # (H, W) bool

    @property
    def name(self) -> str:
        return f"{self.timestamp:.6f}.png"


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic lattice hash -> [0, 1): splitmix-style 64-bit mixing."""
    x = ix.astype(np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    x ^= iy.astype(np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    x ^= np.uint64((seed * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return (x >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _value_noise(u: np.ndarray, v: np.ndarray, seed: int,
                 base_period: float, octaves: int) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [0, 1], octaves of halving period."""
    total = np.zeros_like(u, dtype=float)
    amp_sum = 0.0
    amp = 1.0
    period = base_period
    for octave in range(octaves):
        su = u / period
        sv = v / period
        iu = np.floor(su)
        iv = np.floor(sv)
        fu = su - iu
        fv = sv - iv
        wu = fu * fu * (3.0 - 2.0 * fu)
        wv = fv * fv * (3.0 - 2.0 * fv)
        s = seed * 1000003 + octave
        n00 = _hash01(iu, iv, s)
        n10 = _hash01(iu + 1, iv, s)
        n01 = _hash01(iu, iv + 1, s)
        n11 = _hash01(iu + 1, iv + 1, s)
        val = (
            n00 * (1 - wu) * (1 - wv)
            + n10 * wu * (1 - wv)
            + n01 * (1 - wu) * wv
            + n11 * wu * wv
        )
        total += amp * val
        amp_sum += amp
        amp *= 0.5
        period *= 0.5
    return total / amp_sum


# surface ids for texture seeding and mask ownership
_BACK, _FLOOR, _CEIL, _LEFT, _RIGHT, _OBJECT = range(6)


def camera_pose_at(spec: SceneSpec, frame: int) -> PoseSE3:
    t = np.asarray(spec.camera_velocity, dtype=float) * frame
    rv = np.asarray(spec.camera_rotvec_velocity, dtype=float) * frame
    return PoseSE3(t, Rotation.from_rotvec(rv).as_quat())


def _triangle_fold(x: float, amplitude: float) -> float:
    """Reflect an unbounded 1D displacement into [-amplitude, +amplitude]."""
    if amplitude <= 0:
        return x
    return abs((x - amplitude) % (4.0 * amplitude) - 2.0 * amplitude) - amplitude


def object_center_at(spec: SceneSpec, frame: int) -> np.ndarray:
    disp = np.asarray(spec.object_velocity, dtype=float) * frame
    disp = np.array([_triangle_fold(d, spec.object_bounce_amplitude) for d in disp])
    return np.array([spec.object_start[0], spec.object_start[1], spec.object_z]) + disp


def render_frame(spec: SceneSpec, frame: int) -> SyntheticFrameBundle:
    w, h = spec.image_size
    k = spec.intrinsics
    pose = camera_pose_at(spec, frame)
    r_wc = pose.rotation.as_matrix()
    o = pose.translation

    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    dirs_cam = np.stack([(us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones_like(us)], axis=-1)
    dirs = dirs_cam @ r_wc.T  # world-frame ray directions, camera depth = ray parameter

    zbuf = np.full((h, w), np.inf)
    surface = np.full((h, w), -1, dtype=np.int8)
    tex_u = np.zeros((h, w))
    tex_v = np.zeros((h, w))

    planes = [
        (_BACK, 2, spec.room_depth, 0, 1),
        (_FLOOR, 1, spec.room_half_height, 0, 2),
        (_CEIL, 1, -spec.room_half_height, 0, 2),
        (_LEFT, 0, -spec.room_half_width, 1, 2),
        (_RIGHT, 0, spec.room_half_width, 1, 2),
    ]
    bounds = {
        0: spec.room_half_width + 1e-6,
        1: spec.room_half_height + 1e-6,
        2: spec.room_depth + 1e-6,
    }
    for sid, axis, coord, ta, tb in planes:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (coord - o[axis]) / dirs[..., axis]
        pa = o[ta] + s * dirs[..., ta]
        pb = o[tb] + s * dirs[..., tb]
        ok_a = np.abs(pa) <= bounds[ta] if ta != 2 else (pa >= -1e-6) & (pa <= bounds[2])
        ok_b = np.abs(pb) <= bounds[tb] if tb != 2 else (pb >= -1e-6) & (pb <= bounds[2])
        hit = np.isfinite(s) & (s > 0.05) & ok_a & ok_b & (s < zbuf)
        zbuf[hit] = s[hit]
        surface[hit] = sid
        tex_u[hit] = pa[hit]
        tex_v[hit] = pb[hit]

    if spec.object_enabled:
        center = object_center_at(spec, frame)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (center[2] - o[2]) / dirs[..., 2]
        px = o[0] + s * dirs[..., 0]
        py = o[1] + s * dirs[..., 1]
        lu = px - center[0]
        lv = py - center[1]
        hit = (
            np.isfinite(s)
            & (s > 0.05)
            & (np.abs(lu) <= spec.object_size[0] / 2)
            & (np.abs(lv) <= spec.object_size[1] / 2)
            & (s < zbuf)
        )
        zbuf[hit] = s[hit]
        surface[hit] = _OBJECT
        tex_u[hit] = lu[hit]  # object-local coords: texture rides with the object
        tex_v[hit] = lv[hit]

    intensity = np.zeros((h, w))
    for sid in range(6):
        sel = surface == sid
        if not np.any(sel):
            continue
        period = spec.object_texture_period if sid == _OBJECT else spec.texture_base_period
        noise = _value_noise(
            tex_u[sel], tex_v[sel], spec.seed * 10 + sid,
            period, spec.texture_octaves,
        )
        intensity[sel] = 50.0 + 170.0 * noise
    gray = np.clip(np.round(intensity), 0, 255).astype(np.uint8)
    rgb = np.repeat(gray[..., None], 3, axis=-1)

    depth_m = zbuf.copy()
    depth_m[~np.isfinite(depth_m)] = 0.0
    if spec.depth_noise_sigma > 0:
        rng = np.random.default_rng((spec.seed, frame))
        valid = depth_m > 0
        depth_m[valid] += rng.normal(0.0, spec.depth_noise_sigma, size=int(valid.sum()))
    depth_raw = np.clip(np.round(depth_m * spec.depth_scale), 0, 0xFFFF).astype(np.uint16)

    labels = np.zeros((h, w), dtype=np.uint8)
    obj_px = surface == _OBJECT
    labels[obj_px] = spec.object_class_id

    ts = spec.start_time + frame * spec.frame_interval
    return SyntheticFrameBundle(ts, rgb, depth_raw, LabelMask(labels), pose, obj_px)


def generate_scene(spec: SceneSpec) -> tuple[list[SyntheticFrameBundle], Trajectory]:
    """Render the whole sequence; the returned trajectory is the exact camera path."""
    spec.validate()
    frames = [render_frame(spec, i) for i in range(spec.num_frames)]
    stamps = np.array([f.timestamp for f in frames])
    poses = tuple(f.pose for f in frames)
    return frames, Trajectory(stamps, poses)


def write_as_tum(frames: list[SyntheticFrameBundle], traj: Trajectory, outdir: str) -> None:
    """Emit rgb/, depth/, masks/, rgb.txt, depth.txt, groundtruth.txt."""
    for sub in ("rgb", "depth", "masks"):
        os.makedirs(os.path.join(outdir, sub), exist_ok=True)
    rgb_lines, depth_lines = [], []
    for f in frames:
        name = f.name
        Image.fromarray(f.rgb).save(os.path.join(outdir, "rgb", name))
        save_depth(f.depth, os.path.join(outdir, "depth", name))
        Image.fromarray(f.mask.labels, mode="L").save(os.path.join(outdir, "masks", name))
        rgb_lines.append(f"{f.timestamp:.6f} rgb/{name}")
        depth_lines.append(f"{f.timestamp:.6f} depth/{name}")
    with open(os.path.join(outdir, "rgb.txt"), "w") as fh:
        fh.write("# timestamp filename\n" + "\n".join(rgb_lines) + "\n")
    with open(os.path.join(outdir, "depth.txt"), "w") as fh:
        fh.write("# timestamp filename\n" + "\n".join(depth_lines) + "\n")
    write_trajectory(traj, os.path.join(outdir, "groundtruth.txt"))


def moving_object_spec(seed: int = 0, num_frames: int = 30, **overrides) -> SceneSpec:
    """Convenience preset: translating camera plus a laterally moving object."""
    spec = SceneSpec(seed=seed, num_frames=num_frames, object_enabled=True)
    return replace(spec, **overrides) if overrides else spec


def static_scene_spec(seed: int = 0, num_frames: int = 30, **overrides) -> SceneSpec:
    spec = SceneSpec(seed=seed, num_frames=num_frames, object_enabled=False)
    return replace(spec, **overrides) if overrides else spec
