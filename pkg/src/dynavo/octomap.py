"""Semantic occupancy octree with log-odds fusion and 2D cost-map projection.

Voxel keys are integer triples floor(coordinate / resolution); the octree
root covers a power-of-two cube of keys and re-roots lazily when a point
falls outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .odometry import CameraIntrinsics, Keyframe, backproject_many
from .rejection import MOVING

OCCUPIED = "occupied"
FREE = "free"


class LogOddsDomainError(ValueError):
    pass


def log_odds_transform(p: float) -> float:
    """logit: l = log(p / (1 - p)); defined only on the open interval (0, 1)."""
    if not 0.0 < p < 1.0:
        raise LogOddsDomainError(f"probability must be in (0, 1), got {p}")
    return math.log(p / (1.0 - p))


def inverse_log_odds(l: float) -> float:
    """p = exp(l) / (exp(l) + 1)."""
    if l >= 0:
        return 1.0 / (1.0 + math.exp(-l))
    e = math.exp(l)
    return e / (e + 1.0)


@dataclass(frozen=True)
class MapConfig:
    resolution: float = 0.05
    tau_hit: float = 0.85
    tau_miss: float = -0.4  # 0 reproduces the hit-only update rule literally
    l_min: float = -2.0
    l_max: float = 3.5
    occupancy_threshold: float = 0.7
    raycast_free_space: bool = True

    def __post_init__(self):
        if self.resolution <= 0 or self.tau_hit <= 0 or self.tau_miss > 0:
            raise ValueError("bad increments or resolution")
        if not self.l_min < 0 < self.l_max:
            raise ValueError("need l_min < 0 < l_max")
        if not 0.5 < self.occupancy_threshold < 1.0:
            raise ValueError("occupancy_threshold must be in (0.5, 1)")


@dataclass
class VoxelState:
    log_odds: float = 0.0
    label_counts: dict = field(default_factory=dict)

    def probability(self) -> float:
        return inverse_log_odds(self.log_odds)

    def label(self) -> int | None:
        """Most-observed class id; ties break toward the lower id."""
        if not self.label_counts:
            return None
        return min(self.label_counts, key=lambda c: (-self.label_counts[c], c))


def update_voxel(
    state: VoxelState, observation: str, class_id: int | None, cfg: MapConfig
) -> VoxelState:
    """Additive log-odds update, clamped to [l_min, l_max]."""
    if observation == OCCUPIED:
        state.log_odds = min(state.log_odds + cfg.tau_hit, cfg.l_max)
        if class_id is not None:
            state.label_counts[class_id] = state.label_counts.get(class_id, 0) + 1
    elif observation == FREE:
        state.log_odds = max(state.log_odds + cfg.tau_miss, cfg.l_min)
    else:
        raise ValueError(f"unknown observation {observation!r}")
    return state


class _Node:
    __slots__ = ("children", "state")

    def __init__(self):
        self.children = None  # list of 8 or None
        self.state = None  # VoxelState at leaves


class SemanticOctree:
    """8-ary subdivision over voxel keys, growing on demand."""

    def __init__(self, config: MapConfig = MapConfig()):
        self.config = config
        self._root = _Node()
        self._origin = np.array([0, 0, 0], dtype=np.int64)  # key-space lower corner
        self._size = 1  # root edge length in voxels, power of two
        self._leaf_count = 0

    @property
    def depth(self) -> int:
        return int(self._size).bit_length() - 1

    def key_of(self, point) -> tuple:
        r = self.config.resolution
        return (
            int(math.floor(point[0] / r)),
            int(math.floor(point[1] / r)),
            int(math.floor(point[2] / r)),
        )

    def center_of(self, key) -> np.ndarray:
        r = self.config.resolution
        return (np.asarray(key, dtype=float) + 0.5) * r

    def _contains(self, key) -> bool:
        return all(self._origin[i] <= key[i] < self._origin[i] + self._size for i in range(3))

    def _grow_towards(self, key) -> None:
        # re-root: the old cube becomes one octant of a doubled cube
        while not self._contains(key):
            new_origin = self._origin.copy()
            child_idx = 0
            for i in range(3):
                if key[i] < self._origin[i]:
                    new_origin[i] -= self._size
                    child_idx |= 1 << i
            new_root = _Node()
            new_root.children = [None] * 8
            new_root.children[child_idx] = self._root
            if self._size == 1 and self._root.children is None and self._root.state is None:
                new_root.children[child_idx] = None  # empty old root need not persist
            self._root = new_root
            self._origin = new_origin
            self._size *= 2

    def _leaf(self, key, create: bool) -> VoxelState | None:
        if not self._contains(key):
            if not create:
                return None
            self._grow_towards(key)
        node = self._root
        origin = self._origin.copy()
        size = self._size
        while size > 1:
            half = size // 2
            idx = 0
            for i in range(3):
                if key[i] >= origin[i] + half:
                    idx |= 1 << i
                    origin[i] += half
            if node.children is None:
                if not create:
                    return None
                node.children = [None] * 8
            child = node.children[idx]
            if child is None:
                if not create:
                    return None
                child = _Node()
                node.children[idx] = child
            node = child
            size = half
        if node.state is None:
            if not create:
                return None
            node.state = VoxelState()
            self._leaf_count += 1
        return node.state

    def update(self, point, observation: str, class_id: int | None = None) -> VoxelState:
        """Apply one observation to the voxel containing a world point."""
        return self.update_key(self.key_of(point), observation, class_id)

    def update_key(self, key, observation: str, class_id: int | None = None) -> VoxelState:
        state = self._leaf(tuple(key), create=True)
        return update_voxel(state, observation, class_id, self.config)

    def voxel(self, point) -> VoxelState | None:
        return self._leaf(self.key_of(point), create=False)

    def __len__(self) -> int:
        return self._leaf_count

    def leaves(self):
        """Yield (key, VoxelState) for every stored voxel."""
        stack = [(self._root, self._origin.copy(), self._size)]
        while stack:
            node, origin, size = stack.pop()
            if size == 1:
                if node.state is not None:
                    yield tuple(int(v) for v in origin), node.state
                continue
            if node.children is None:
                continue
            half = size // 2
            for idx, child in enumerate(node.children):
                if child is None:
                    continue
                off = np.array([(idx >> i) & 1 for i in range(3)], dtype=np.int64)
                stack.append((child, origin + off * half, half))

    def occupied_voxels(self) -> list[tuple[np.ndarray, int | None, float]]:
        """(center, label, p) for voxels with p above the occupancy threshold."""
        out = []
        for key, state in self.leaves():
            p = state.probability()
            if p > self.config.occupancy_threshold:
                out.append((self.center_of(key), state.label(), p))
        return out

    def occupied_keys(self) -> list[tuple]:
        return [
            key
            for key, state in self.leaves()
            if state.probability() > self.config.occupancy_threshold
        ]


def traverse_ray_voxels(
    origins: np.ndarray, endpoints: np.ndarray, resolution: float
) -> np.ndarray:
    """Integer-grid (Amanatides-Woo) traversal, vectorized over rays.

    Returns the unique voxel keys crossed by any ray, endpoint voxels
    excluded (they belong to the occupied update).
    """
    o = np.asarray(origins, dtype=float).reshape(-1, 3)
    e = np.asarray(endpoints, dtype=float).reshape(-1, 3)
    if len(o) == 1 and len(e) > 1:
        o = np.broadcast_to(o, e.shape).copy()
    n = len(e)
    cur = np.floor(o / resolution).astype(np.int64)
    end = np.floor(e / resolution).astype(np.int64)
    d = e - o
    step = np.sign(d).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tdelta = np.where(d != 0, resolution / np.abs(d), np.inf)
        next_boundary = (cur + (step > 0)) * resolution
        tmax = np.where(d != 0, (next_boundary - o) / d, np.inf)

    visited = []
    active = np.any(cur != end, axis=1)
    if np.any(active):
        visited.append(cur[active].copy())
    max_steps = int(np.abs(end - cur).sum(axis=1).max(initial=0)) + 3
    for _ in range(max_steps):
        if not np.any(active):
            break
        axis = np.argmin(tmax, axis=1)
        rows = np.nonzero(active)[0]
        ax = axis[rows]
        cur[rows, ax] += step[rows, ax]
        tmax[rows, ax] += tdelta[rows, ax]
        active[rows] = np.any(cur[rows] != end[rows], axis=1)
        still = rows[active[rows]]
        if len(still):
            visited.append(cur[still].copy())
    if not visited:
        return np.empty((0, 3), dtype=np.int64)
    allv = np.concatenate(visited, axis=0)
    return np.unique(allv, axis=0)


@dataclass
class InsertionSummary:
    points_inserted: int = 0
    points_skipped_dynamic: int = 0
    points_skipped_invalid: int = 0
    free_updates: int = 0


def insert_keyframe_cloud(
    tree: SemanticOctree,
    kf: Keyframe,
    k: CameraIntrinsics,
    stride: int = 4,
) -> InsertionSummary:
    """Fuse a keyframe's depth (and labels, if present) into the map.

    Every stride-th valid-depth pixel is back-projected to world and its
    voxel gets an occupied update carrying the pixel's class id. Pixels
    inside moving-verdict regions are skipped so dynamic objects never
    enter the map. With raycast_free_space, voxels between the sensor and
    each endpoint get one free update per insertion, applied before the
    occupied updates.
    """
    if kf.depth_m is None:
        raise ValueError("keyframe has no depth image")
    depth = kf.depth_m
    h, w = depth.shape
    vs, us = np.mgrid[0:h:stride, 0:w:stride]
    us = us.ravel()
    vs = vs.ravel()
    d = depth[vs, us]
    summary = InsertionSummary()

    valid = np.isfinite(d) & (d > 0)
    summary.points_skipped_invalid = int((~valid).sum())
    us, vs, d = us[valid], vs[valid], d[valid]

    moving_regions = [v.region for v in kf.verdicts if v.verdict == MOVING]
    if moving_regions:
        skip = np.zeros(len(us), dtype=bool)
        for region in moving_regions:
            u0, v0, u1, v1 = region.bbox
            inbox = (us >= u0) & (us <= u1) & (vs >= v0) & (vs <= v1)
            idx = np.nonzero(inbox)[0]
            for i in idx:
                if region.patch[vs[i] - v0, us[i] - u0]:
                    skip[i] = True
        summary.points_skipped_dynamic = int(skip.sum())
        us, vs, d = us[~skip], vs[~skip], d[~skip]

    if kf.mask is not None:
        class_ids = kf.mask.labels[vs, us].astype(int)
    else:
        class_ids = np.zeros(len(us), dtype=int)

    cam_pts = backproject_many(np.column_stack([us, vs]), d, k)
    world_pts = kf.pose.apply(cam_pts) if len(cam_pts) else cam_pts

    if tree.config.raycast_free_space and len(world_pts):
        origin = kf.pose.translation
        free_keys = traverse_ray_voxels(origin[None, :], world_pts, tree.config.resolution)
        end_keys = {tree.key_of(p) for p in world_pts}
        for key in map(tuple, free_keys):
            if key in end_keys:
                continue  # a hit beats a miss within one insertion
            tree.update_key(key, FREE)
            summary.free_updates += 1

    for point, cid in zip(world_pts, class_ids):
        tree.update(point, OCCUPIED, int(cid))
    summary.points_inserted = len(world_pts)
    return summary


@dataclass
class CostMap:
    grid: np.ndarray  # bool, True = occupied
    origin_xy: tuple  # world coords of cell (0, 0)'s lower corner
    resolution: float


def project_costmap(tree: SemanticOctree, z_min: float, z_max: float) -> CostMap:
    """Project occupied voxels with center height in [z_min, z_max] to 2D."""
    if not z_min < z_max:
        raise ValueError("need z_min < z_max")
    keys = [
        key
        for key in tree.occupied_keys()
        if z_min <= (key[2] + 0.5) * tree.config.resolution <= z_max
    ]
    if not keys:
        return CostMap(np.zeros((0, 0), dtype=bool), (0.0, 0.0), tree.config.resolution)
    arr = np.array(keys, dtype=np.int64)
    x0, y0 = int(arr[:, 0].min()), int(arr[:, 1].min())
    nx = int(arr[:, 0].max()) - x0 + 1
    ny = int(arr[:, 1].max()) - y0 + 1
    grid = np.zeros((ny, nx), dtype=bool)
    grid[arr[:, 1] - y0, arr[:, 0] - x0] = True
    res = tree.config.resolution
    return CostMap(grid, (x0 * res, y0 * res), res)


def write_costmap_pgm(costmap: CostMap, path: str) -> None:
    """PGM export: 0 = occupied, 255 = free."""
    h, w = costmap.grid.shape if costmap.grid.size else (1, 1)
    vals = np.full((h, w), 255, dtype=np.uint8)
    if costmap.grid.size:
        vals[costmap.grid] = 0
    with open(path, "wb") as fh:
        header = (
            f"P5\n# resolution {costmap.resolution} origin "
            f"{costmap.origin_xy[0]} {costmap.origin_xy[1]}\n{w} {h}\n255\n"
        )
        fh.write(header.encode("ascii"))
        fh.write(vals.tobytes())


def voc_palette_color(class_id: int) -> tuple:
    """Standard PASCAL VOC color for a class id (bit-interleaved palette)."""
    cid = class_id
    r = g = b = 0
    for shift in range(8):
        r |= ((cid >> 0) & 1) << (7 - shift)
        g |= ((cid >> 1) & 1) << (7 - shift)
        b |= ((cid >> 2) & 1) << (7 - shift)
        cid >>= 3
    return (r, g, b)


def export_ascii(tree: SemanticOctree, path: str) -> int:
    """Write "x y z class_id p" per occupied voxel; returns the voxel count."""
    voxels = tree.occupied_voxels()
    with open(path, "w") as fh:
        fh.write("# x y z class_id p\n")
        for center, label, p in voxels:
            cid = -1 if label is None else label
            fh.write(f"{center[0]:.6f} {center[1]:.6f} {center[2]:.6f} {cid} {p:.6f}\n")
    return len(voxels)


def export_ply(tree: SemanticOctree, path: str) -> int:
    """ASCII PLY of occupied voxel centers colored by class palette."""
    voxels = tree.occupied_voxels()
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(voxels)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write("end_header\n")
        for center, label, _ in voxels:
            r, g, b = voc_palette_color(0 if label is None else label)
            fh.write(f"{center[0]:.6f} {center[1]:.6f} {center[2]:.6f} {r} {g} {b}\n")
    return len(voxels)
