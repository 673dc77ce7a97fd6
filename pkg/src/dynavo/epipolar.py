"""Fundamental-matrix estimation and the moving-consistency check.

A tracked point is flagged dynamic when its distance to the epipolar line
induced by the previous-frame point exceeds a preset pixel threshold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .features import (
    TRACKED,
    ImagePyramid,
    MatchedPair,
    build_pyramid,
    filter_matched_pairs,
    track_pyr_lk,
)


class ArityError(ValueError):
    """Too few correspondences for the requested estimation."""


class DegeneracyError(ValueError):
    """Point configuration does not constrain the model."""


class EstimationFailureError(RuntimeError):
    """RANSAC could not find a model with enough inliers."""


class DegenerateLineError(ValueError):
    """F maps the point to a line with zero direction (epipole hit)."""


@dataclass(frozen=True)
class FundamentalMatrix:
    """3x3 rank-2 matrix with unit Frobenius norm."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).reshape(3, 3)
        norm = np.linalg.norm(m)
        if norm == 0 or not np.all(np.isfinite(m)):
            raise ValueError("invalid fundamental matrix")
        object.__setattr__(self, "m", m / norm)


@dataclass(frozen=True)
class EpipolarLine:
    """Homogeneous line (X, Y, Z): X u + Y v + Z = 0."""

    x: float
    y: float
    z: float

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class MotionCheckConfig:
    epsilon: float = 1.0  # dynamic-point distance threshold, px
    ransac_threshold: float = 0.5  # inlier distance, px
    ransac_max_iters: int = 500
    ransac_confidence: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0 or self.ransac_threshold <= 0 or self.ransac_max_iters <= 0:
            raise ValueError("thresholds and iteration count must be positive")
        if not 0 < self.ransac_confidence < 1:
            raise ValueError("ransac_confidence must be in (0, 1)")


@dataclass(frozen=True)
class DynamicPointSet:
    """Current-frame points flagged as moving."""

    points: np.ndarray  # (N, 2)

    def __len__(self) -> int:
        return len(self.points)


def _pair_arrays(pairs: list[MatchedPair]) -> tuple[np.ndarray, np.ndarray]:
    p1 = np.array([p.p1 for p in pairs], dtype=float).reshape(-1, 2)
    p2 = np.array([p.p2 for p in pairs], dtype=float).reshape(-1, 2)
    return p1, p2


def _normalize(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic normalization: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    mean_dist = np.mean(np.linalg.norm(centered, axis=1))
    scale = np.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    t = np.array(
        [
            [scale, 0, -scale * centroid[0]],
            [0, scale, -scale * centroid[1]],
            [0, 0, 1],
        ]
    )
    return centered * scale, t


def eight_point_fundamental(pairs: list[MatchedPair]) -> FundamentalMatrix:
    """Normalized eight-point estimate of F with rank-2 enforcement.

    Least-squares solution of P2' F P1 = 0 over all pairs (8 or more).
    """
    if len(pairs) < 8:
        raise ArityError(f"need >= 8 pairs, got {len(pairs)}")
    p1, p2 = _pair_arrays(pairs)
    n1, t1 = _normalize(p1)
    n2, t2 = _normalize(p2)
    u1, v1 = n1[:, 0], n1[:, 1]
    u2, v2 = n2[:, 0], n2[:, 1]
    a = np.column_stack(
        [u2 * u1, u2 * v1, u2, v2 * u1, v2 * v1, v2, u1, v1, np.ones(len(p1))]
    )
    if np.linalg.matrix_rank(a, tol=1e-8 * max(1.0, np.abs(a).max())) < 8:
        raise DegeneracyError("design matrix rank < 8 (degenerate correspondences)")
    _, _, vt = np.linalg.svd(a)
    f_norm = vt[-1].reshape(3, 3)
    f = t2.T @ f_norm @ t1
    u, s, vt = np.linalg.svd(f)
    s[2] = 0.0
    f = u @ np.diag(s) @ vt
    return FundamentalMatrix(f)


def epipolar_line(f: FundamentalMatrix, p1) -> EpipolarLine:
    """l = F [u1, v1, 1]."""
    u1, v1 = float(p1[0]), float(p1[1])
    x, y, z = f.m @ np.array([u1, v1, 1.0])
    return EpipolarLine(float(x), float(y), float(z))


def epipolar_distances(f: FundamentalMatrix, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Vectorized point-to-epipolar-line distance; inf where the line is degenerate."""
    p1 = np.asarray(p1, dtype=float).reshape(-1, 2)
    p2 = np.asarray(p2, dtype=float).reshape(-1, 2)
    ones = np.ones(len(p1))
    h1 = np.column_stack([p1, ones])
    h2 = np.column_stack([p2, ones])
    lines = h1 @ f.m.T  # (N, 3): F @ P1 per row
    num = np.abs(np.sum(h2 * lines, axis=1))
    den = np.hypot(lines[:, 0], lines[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(den > 0, num / den, np.inf)
    return d


def epipolar_distance(f: FundamentalMatrix, p1, p2) -> float:
    """Distance from p2 to the epipolar line of p1 in the current image."""
    line = epipolar_line(f, p1)
    den = float(np.hypot(line.x, line.y))
    if den == 0:
        raise DegenerateLineError(f"point {tuple(p1)} maps to a degenerate line")
    num = abs(float(np.array([p2[0], p2[1], 1.0]) @ f.m @ np.array([p1[0], p1[1], 1.0])))
    return num / den


def ransac_fundamental(
    pairs: list[MatchedPair], cfg: MotionCheckConfig = MotionCheckConfig()
) -> tuple[FundamentalMatrix, np.ndarray]:
    """Robust F estimate: repeated 8-point fits on random minimal samples.

    Scores by epipolar distance < cfg.ransac_threshold; ties on inlier count
    break toward the lower inlier distance sum. The winning model is refit
    on all of its inliers. Seeded and deterministic.
    """
    n = len(pairs)
    if n < 8:
        raise ArityError(f"need >= 8 pairs, got {n}")
    p1, p2 = _pair_arrays(pairs)
    rng = np.random.default_rng(cfg.seed)

    best_inliers = None
    best_count = 0
    best_score = np.inf
    max_iters = cfg.ransac_max_iters
    it = 0
    while it < max_iters:
        it += 1
        idx = rng.choice(n, size=8, replace=False)
        try:
            f = eight_point_fundamental([pairs[i] for i in idx])
        except DegeneracyError:
            continue
        d = epipolar_distances(f, p1, p2)
        inliers = d < cfg.ransac_threshold
        count = int(inliers.sum())
        score = float(d[inliers].sum())
        if count > best_count or (count == best_count and score < best_score):
            best_count = count
            best_score = score
            best_inliers = inliers
            # adaptive iteration bound from the inlier ratio
            w = count / n
            if w > 0:
                denom = np.log1p(-min(w**8, 1 - 1e-12))
                needed = int(np.ceil(np.log(1 - cfg.ransac_confidence) / denom))
                max_iters = min(max_iters, max(it, needed))
    if best_inliers is None or best_count < 8:
        raise EstimationFailureError(f"best model has {best_count} inliers (< 8)")
    f = eight_point_fundamental([pairs[i] for i in np.nonzero(best_inliers)[0]])
    return f, best_inliers


def detect_dynamic_points(
    prev_image: np.ndarray,
    cur_image: np.ndarray,
    prev_points: np.ndarray,
    cfg: MotionCheckConfig = MotionCheckConfig(),
    num_levels: int = 3,
    window: int = 21,
    edge_margin: int = 3,
    patch_diff_max: float = 1000.0,
) -> tuple[list[MatchedPair], DynamicPointSet, FundamentalMatrix]:
    """Full moving-consistency check between two frames.

    Tracks prev_points into cur_image, discards border/patch-inconsistent
    pairs, fits F robustly, and flags every surviving current-frame point
    whose epipolar distance exceeds cfg.epsilon as dynamic. Points mapping
    to a degenerate epipolar line are treated as non-dynamic.
    """
    prev_points = np.asarray(prev_points, dtype=float).reshape(-1, 2)
    if len(prev_points) < 8:
        raise ArityError(f"need >= 8 points, got {len(prev_points)}")
    prev_pyr = build_pyramid(prev_image, num_levels)
    cur_pyr = build_pyramid(cur_image, num_levels)
    pairs = track_pyr_lk(prev_pyr, cur_pyr, prev_points, window=window)
    kept = filter_matched_pairs(
        pairs, prev_image, cur_image, edge_margin=edge_margin, patch_diff_max=patch_diff_max
    )
    if len(kept) < 8:
        raise EstimationFailureError(f"only {len(kept)} pairs survived filtering (< 8)")
    conditioning_warning_if_low_parallax(kept)
    f, _ = ransac_fundamental(kept, cfg)
    p1, p2 = _pair_arrays(kept)
    d = epipolar_distances(f, p1, p2)
    dynamic = (d > cfg.epsilon) & np.isfinite(d)
    return pairs, DynamicPointSet(p2[dynamic].copy()), f


def conditioning_warning_if_low_parallax(pairs: list[MatchedPair], min_flow_px: float = 0.5):
    """Warn when median flow is tiny: F is ill-conditioned under near-zero parallax."""
    if not pairs:
        return
    p1, p2 = _pair_arrays(pairs)
    med = float(np.median(np.linalg.norm(p2 - p1, axis=1)))
    if med < min_flow_px:
        warnings.warn(
            f"median flow {med:.3f}px: near-zero parallax, fundamental matrix "
            "is poorly constrained",
            RuntimeWarning,
            stacklevel=2,
        )
