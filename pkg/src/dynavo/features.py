"""Corner detection and pyramidal sparse optical-flow tracking.

Points are (u, v) image coordinates: u = column, v = row, sub-pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

TRACKED = "tracked"
LOST = "lost"
FILTERED = "filtered"


class PyramidMismatchError(ValueError):
    """Pyramids were not built from equal-size images."""


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Rounded luma (0.299 R + 0.587 G + 0.114 B) as float32; grayscale passes through."""
    if image.ndim == 2:
        return image.astype(np.float32)
    luma = 0.299 * image[..., 0] + 0.587 * image[..., 1] + 0.114 * image[..., 2]
    return np.round(luma).astype(np.float32)


@dataclass
class MatchedPair:
    """A tracked correspondence between the previous and current frame."""

    p1: np.ndarray  # (u, v) in previous frame
    p2: np.ndarray  # (u, v) in current frame
    status: str = TRACKED

    @property
    def P1(self) -> np.ndarray:
        return np.array([self.p1[0], self.p1[1], 1.0])

    @property
    def P2(self) -> np.ndarray:
        return np.array([self.p2[0], self.p2[1], 1.0])


@dataclass(frozen=True)
class ImagePyramid:
    levels: tuple  # level 0 is full resolution, each next level ceil(dims/2)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def shape(self) -> tuple:
        return self.levels[0].shape


def build_pyramid(image: np.ndarray, num_levels: int = 3) -> ImagePyramid:
    if num_levels < 1:
        raise ValueError("num_levels must be >= 1")
    levels = [to_grayscale(image)]
    for _ in range(num_levels - 1):
        blurred = ndimage.gaussian_filter(levels[-1], sigma=1.0, mode="nearest")
        levels.append(blurred[::2, ::2])
    return ImagePyramid(tuple(levels))


def _min_eig_response(gray: np.ndarray, block: int = 3) -> np.ndarray:
    """Minimum eigenvalue of the windowed structure tensor at every pixel."""
    smooth = ndimage.gaussian_filter(gray, sigma=1.0, mode="nearest")
    iy, ix = np.gradient(smooth)
    sxx = ndimage.uniform_filter(ix * ix, block, mode="nearest")
    syy = ndimage.uniform_filter(iy * iy, block, mode="nearest")
    sxy = ndimage.uniform_filter(ix * iy, block, mode="nearest")
    half_trace = (sxx + syy) / 2.0
    disc = np.sqrt(((sxx - syy) / 2.0) ** 2 + sxy**2)
    return half_trace - disc


def detect_corners(
    image: np.ndarray,
    max_count: int = 500,
    quality: float = 0.01,
    min_distance: float = 8.0,
    exclude: np.ndarray | None = None,
) -> np.ndarray:
    """Shi-Tomasi style corners, strongest first, spaced >= min_distance apart.

    Returns an (N, 2) float array of (u, v). `exclude` is an optional (M, 2)
    set of points whose min_distance neighborhoods are kept free (used for
    feature replenishment).
    """
    if max_count < 1:
        raise ValueError("max_count must be >= 1")
    if not 0 < quality <= 1:
        raise ValueError("quality must be in (0, 1]")
    gray = to_grayscale(image)
    resp = _min_eig_response(gray)
    border = 3
    resp[:border, :] = 0
    resp[-border:, :] = 0
    resp[:, :border] = 0
    resp[:, -border:] = 0
    peak = resp.max()
    if peak <= 0:
        return np.empty((0, 2))
    # local maxima above the relative quality threshold
    maxima = (resp == ndimage.maximum_filter(resp, size=3, mode="nearest")) & (
        resp >= quality * peak
    )
    vs, us = np.nonzero(maxima)
    if len(us) == 0:
        return np.empty((0, 2))
    order = np.argsort(resp[vs, us])[::-1]
    us, vs = us[order], vs[order]

    # greedy minimum-distance suppression on a coarse occupancy grid
    cell = max(min_distance, 1.0)
    occupied: dict[tuple[int, int], list[tuple[float, float]]] = {}

    def blocked(u: float, v: float) -> bool:
        ci, cj = int(u // cell), int(v // cell)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for ou, ov in occupied.get((ci + di, cj + dj), ()):
                    if (u - ou) ** 2 + (v - ov) ** 2 < min_distance**2:
                        return True
        return False

    if exclude is not None:
        for ou, ov in np.asarray(exclude, dtype=float).reshape(-1, 2):
            occupied.setdefault((int(ou // cell), int(ov // cell)), []).append((ou, ov))

    out = []
    for u, v in zip(us, vs):
        if blocked(u, v):
            continue
        occupied.setdefault((int(u // cell), int(v // cell)), []).append((float(u), float(v)))
        out.append((float(u), float(v)))
        if len(out) >= max_count:
            break
    return np.array(out, dtype=float).reshape(-1, 2)


def _sample(img: np.ndarray, pts_uv: np.ndarray) -> np.ndarray:
    """Bilinear sample at (..., 2) (u, v) coordinates."""
    coords = np.stack([pts_uv[..., 1].ravel(), pts_uv[..., 0].ravel()])
    vals = ndimage.map_coordinates(img, coords, order=1, mode="nearest", prefilter=False)
    return vals.reshape(pts_uv.shape[:-1])


def track_pyr_lk(
    prev: ImagePyramid,
    cur: ImagePyramid,
    points: np.ndarray,
    window: int = 21,
    max_iters: int = 30,
    eps: float = 0.01,
) -> list[MatchedPair]:
    """Coarse-to-fine iterative LK flow for sparse points.

    One MatchedPair per input point; status is `tracked` only if the
    refinement converged at every pyramid level and the end point is inside
    the image.
    """
    if prev.shape != cur.shape or prev.num_levels != cur.num_levels:
        raise PyramidMismatchError("pyramids built from different-size images")
    if window % 2 == 0 or window < 3:
        raise ValueError("window must be odd and >= 3")
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    if n == 0:
        return []

    r = window // 2
    du, dv = np.meshgrid(np.arange(-r, r + 1, dtype=float), np.arange(-r, r + 1, dtype=float))
    offsets = np.stack([du, dv], axis=-1).reshape(-1, 2)  # (win*win, 2)
    ex = np.array([1.0, 0.0])
    ey = np.array([0.0, 1.0])

    ok = np.ones(n, dtype=bool)
    g = np.zeros((n, 2))  # flow guess at the current level

    for level in range(prev.num_levels - 1, -1, -1):
        img0 = prev.levels[level]
        img1 = cur.levels[level]
        h, w = img0.shape
        scale = 2.0**level
        p = points / scale  # (n, 2)

        centers = p[:, None, :] + offsets[None, :, :]  # (n, win*win, 2)
        strict = level == 0
        # gradient sampling needs one extra pixel of margin; at coarse levels
        # a window that does not fit just carries the guess down unchanged
        fits = (
            (p[:, 0] - r - 1 >= 0)
            & (p[:, 0] + r + 1 <= w - 1)
            & (p[:, 1] - r - 1 >= 0)
            & (p[:, 1] + r + 1 <= h - 1)
        )
        if strict:
            ok &= fits
        refine = ok & fits

        i0 = _sample(img0, centers)
        gx = (_sample(img0, centers + ex) - _sample(img0, centers - ex)) / 2.0
        gy = (_sample(img0, centers + ey) - _sample(img0, centers - ey)) / 2.0
        gxx = np.sum(gx * gx, axis=1)
        gyy = np.sum(gy * gy, axis=1)
        gxy = np.sum(gx * gy, axis=1)
        det = gxx * gyy - gxy * gxy
        good_det = det > 1e-12
        if strict:
            ok &= good_det
        refine &= good_det

        v = np.zeros((n, 2))
        converged = np.zeros(n, dtype=bool)
        for _ in range(max_iters):
            active = refine & ok & ~converged
            if not np.any(active):
                break
            q = centers[active] + (g[active] + v[active])[:, None, :]
            qa = q.reshape(len(q), -1, 2)
            umin = qa[..., 0].min(axis=1)
            umax = qa[..., 0].max(axis=1)
            vmin = qa[..., 1].min(axis=1)
            vmax = qa[..., 1].max(axis=1)
            inb = (umin >= 0) & (umax <= w - 1) & (vmin >= 0) & (vmax <= h - 1)
            idx = np.nonzero(active)[0]
            if strict:
                ok[idx[~inb]] = False
            else:
                converged[idx[~inb]] = True  # freeze at the coarse level
            idx = idx[inb]
            if len(idx) == 0:
                continue
            i1 = _sample(img1, centers[idx] + (g[idx] + v[idx])[:, None, :])
            e = i0[idx] - i1
            bx = np.sum(e * gx[idx], axis=1)
            by = np.sum(e * gy[idx], axis=1)
            d = det[idx]
            step_u = (gyy[idx] * bx - gxy[idx] * by) / d
            step_v = (gxx[idx] * by - gxy[idx] * bx) / d
            v[idx, 0] += step_u
            v[idx, 1] += step_v
            converged[idx] = np.hypot(step_u, step_v) < eps
        if strict:
            ok &= converged | ~refine
            ok &= refine  # level 0 must actually refine
        v[~refine] = 0.0

        if level > 0:
            g = 2.0 * (g + v)
        else:
            g = g + v

    p2 = points + g
    h0, w0 = prev.shape
    ok &= (p2[:, 0] >= 0) & (p2[:, 0] <= w0 - 1) & (p2[:, 1] >= 0) & (p2[:, 1] <= h0 - 1)
    return [
        MatchedPair(points[i].copy(), p2[i].copy(), TRACKED if ok[i] else LOST)
        for i in range(n)
    ]


def filter_matched_pairs(
    pairs: list[MatchedPair],
    prev_image: np.ndarray,
    cur_image: np.ndarray,
    edge_margin: int = 3,
    patch_diff_max: float = 1000.0,
) -> list[MatchedPair]:
    """Drop pairs near the border or with inconsistent 3x3 intensity patches.

    Rejected pairs get status FILTERED (in place); the kept pairs are
    returned in their original order. Non-tracked pairs are skipped.
    """
    g0 = to_grayscale(prev_image).astype(np.int32)
    g1 = to_grayscale(cur_image).astype(np.int32)
    h, w = g0.shape
    kept = []
    for pair in pairs:
        if pair.status != TRACKED:
            continue
        u1, v1 = pair.p1
        u2, v2 = pair.p2
        if not (
            edge_margin <= u1 <= w - 1 - edge_margin
            and edge_margin <= v1 <= h - 1 - edge_margin
            and edge_margin <= u2 <= w - 1 - edge_margin
            and edge_margin <= v2 <= h - 1 - edge_margin
        ):
            pair.status = FILTERED
            continue
        c1 = (int(round(v1)), int(round(u1)))
        c2 = (int(round(v2)), int(round(u2)))
        patch1 = g0[c1[0] - 1 : c1[0] + 2, c1[1] - 1 : c1[1] + 2]
        patch2 = g1[c2[0] - 1 : c2[0] + 2, c2[1] - 1 : c2[1] + 2]
        if np.abs(patch1 - patch2).sum() > patch_diff_max:
            pair.status = FILTERED
            continue
        kept.append(pair)
    return kept
