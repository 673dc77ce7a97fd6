"""TUM RGB-D dataset I/O: trajectory files, image list files, depth images,
and timestamp association between streams.

File formats follow the TUM benchmark conventions:
  - trajectory lines:  "timestamp tx ty tz qx qy qz qw"
  - list files (rgb.txt, depth.txt):  "timestamp filename"
  - '#' starts a comment line in either format
  - depth images are 16-bit single-channel PNG, raw = meters * depth_scale,
    raw value 0 means "no measurement"
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Sequence, TypeVar

import numpy as np
from PIL import Image

from .pose import PoseSE3

DEFAULT_DEPTH_SCALE = 5000.0  # raw units per meter, TUM convention
DEFAULT_MAX_DIFF = 0.02  # seconds, TUM association tooling default


class TrajectoryFormatError(ValueError):
    """Malformed trajectory or list file (bad field count, non-numeric, ordering)."""


class DepthFormatError(ValueError):
    """Depth image is not 16-bit single-channel."""


@dataclass(frozen=True)
class Trajectory:
    timestamps: np.ndarray  # (N,) seconds
    poses: tuple  # N PoseSE3

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "poses", tuple(self.poses))
        if len(ts) != len(self.poses):
            raise TrajectoryFormatError("timestamp/pose count mismatch")
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise TrajectoryFormatError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    def translations(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)


@dataclass
class Frame:
    """One RGB-D frame, optionally carrying a label mask (see segmentation)."""

    timestamp: float
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) uint16, raw units
    depth_scale: float = DEFAULT_DEPTH_SCALE
    mask: Optional[object] = None

    def __post_init__(self):
        if self.rgb.shape[:2] != self.depth.shape[:2]:
            raise ValueError("rgb and depth dimensions differ")
        if self.depth_scale <= 0:
            raise ValueError("depth_scale must be positive")

    def depth_meters(self) -> np.ndarray:
        """Depth in meters, NaN where invalid (raw == 0)."""
        d = self.depth.astype(float) / self.depth_scale
        d[self.depth == 0] = np.nan
        return d


def parse_trajectory_file(path: str) -> Trajectory:
    """Parse a TUM trajectory file into a Trajectory.

    Raises TrajectoryFormatError with the offending line number on malformed
    lines or non-monotonic timestamps.
    """
    stamps, poses = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 8:
                raise TrajectoryFormatError(
                    f"{path}:{lineno}: expected 8 fields, got {len(fields)}"
                )
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise TrajectoryFormatError(f"{path}:{lineno}: non-numeric field") from None
            stamps.append(vals[0])
            poses.append(PoseSE3(np.array(vals[1:4]), np.array(vals[4:8])))
    if len(stamps) > 1 and np.any(np.diff(stamps) <= 0):
        raise TrajectoryFormatError(f"{path}: timestamps not strictly increasing")
    return Trajectory(np.array(stamps, dtype=float), tuple(poses))


def write_trajectory(traj: Trajectory, path: str) -> None:
    """Write a trajectory in TUM format (6 decimals for stamps, 7 for pose fields)."""
    with open(path, "w") as fh:
        fh.write("# timestamp tx ty tz qx qy qz qw\n")
        for ts, pose in zip(traj.timestamps, traj.poses):
            t, q = pose.translation, pose.quaternion
            fh.write(
                f"{ts:.6f} {t[0]:.7f} {t[1]:.7f} {t[2]:.7f} "
                f"{q[0]:.7f} {q[1]:.7f} {q[2]:.7f} {q[3]:.7f}\n"
            )


def parse_list_file(path: str) -> list[tuple[float, str]]:
    """Parse an rgb.txt/depth.txt style list: lines "timestamp filename"."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise TrajectoryFormatError(
                    f"{path}:{lineno}: expected 2 fields, got {len(fields)}"
                )
            try:
                ts = float(fields[0])
            except ValueError:
                raise TrajectoryFormatError(f"{path}:{lineno}: bad timestamp") from None
            out.append((ts, fields[1]))
    return out


T = TypeVar("T")
U = TypeVar("U")


def associate_streams(
    a: Sequence[tuple[float, T]],
    b: Sequence[tuple[float, U]],
    max_diff: float = DEFAULT_MAX_DIFF,
) -> list[tuple[tuple[float, T], tuple[float, U]]]:
    """Greedy nearest-timestamp one-to-one matching between two sorted streams.

    Candidate pairs with |dt| <= max_diff are taken in order of increasing
    |dt|; each element is used at most once. Result is sorted by a's stamps.
    """
    if max_diff <= 0:
        raise ValueError("max_diff must be positive")
    tb_all = np.array([tb for tb, _ in b], dtype=float)
    candidates = []
    for i, (ta, _) in enumerate(a):
        lo = int(np.searchsorted(tb_all, ta - max_diff, side="left"))
        hi = int(np.searchsorted(tb_all, ta + max_diff, side="right"))
        for j in range(lo, hi):
            dt = abs(ta - tb_all[j])
            if dt <= max_diff:
                candidates.append((dt, i, j))
    candidates.sort()
    used_a, used_b = set(), set()
    pairs = []
    for dt, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    pairs.sort()
    return [(a[i], b[j]) for i, j in pairs]


def load_depth(path: str, depth_scale: float = DEFAULT_DEPTH_SCALE) -> np.ndarray:
    """Load a 16-bit single-channel depth PNG as a (H, W) uint16 array."""
    img = Image.open(path)
    if img.mode not in ("I", "I;16", "I;16B"):
        raise DepthFormatError(f"{path}: expected 16-bit single-channel, got mode {img.mode!r}")
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise DepthFormatError(f"{path}: expected single channel")
    if arr.max(initial=0) > 0xFFFF or arr.min(initial=0) < 0:
        raise DepthFormatError(f"{path}: values exceed 16-bit range")
    if depth_scale <= 0:
        raise ValueError("depth_scale must be positive")
    return arr.astype(np.uint16)


def save_depth(arr: np.ndarray, path: str) -> None:
    Image.fromarray(arr.astype(np.uint16)).save(path)


def raw_depth_to_meters(raw: np.ndarray, depth_scale: float = DEFAULT_DEPTH_SCALE) -> np.ndarray:
    d = raw.astype(float) / depth_scale
    d[raw == 0] = np.nan
    return d


def load_rgb(path: str) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def load_dataset_index(root: str, max_diff: float = DEFAULT_MAX_DIFF) -> list[tuple[float, str, str]]:
    """Associate rgb.txt with depth.txt; returns (rgb_timestamp, rgb_path, depth_path)."""
    rgb = parse_list_file(os.path.join(root, "rgb.txt"))
    depth = parse_list_file(os.path.join(root, "depth.txt"))
    pairs = associate_streams(rgb, depth, max_diff)
    return [
        (ta, os.path.join(root, fa), os.path.join(root, fb))
        for (ta, fa), (tb, fb) in pairs
    ]
