"""Shared oracles for the test suite: analytic two-view geometry and textures."""

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from dynavo.features import MatchedPair


def skew(t):
    return np.array([
        [0.0, -t[2], t[1]],
        [t[2], 0.0, -t[0]],
        [-t[1], t[0], 0.0],
    ])


def project(points, k_mat):
    """Pinhole projection of (N, 3) camera-frame points with a 3x3 K."""
    uvw = points @ k_mat.T
    return uvw[:, :2] / uvw[:, 2:3]


def two_view_pairs(n, t, r=None, k_mat=None, seed=0, z_range=(2.0, 6.0), spread=2.0):
    """Exact correspondences of a rigid cloud seen from two cameras.

    Camera 1 sits at the origin; camera 2 has pose (r, t) in world, so a
    world point X appears at r.T @ (X - t) in camera 2. Returns the pairs
    and the analytic fundamental matrix (un-normalized).
    """
    rng = np.random.default_rng(seed)
    if r is None:
        r = np.eye(3)
    if k_mat is None:
        k_mat = np.eye(3)
    pts = np.column_stack([
        rng.uniform(-spread, spread, n),
        rng.uniform(-spread, spread, n),
        rng.uniform(*z_range, n),
    ])
    cam2 = (pts - np.asarray(t, dtype=float)) @ r  # r.T @ (X - t), row form
    p1 = project(pts, k_mat)
    p2 = project(cam2, k_mat)
    pairs = [MatchedPair(a.copy(), b.copy()) for a, b in zip(p1, p2)]
    k_inv = np.linalg.inv(k_mat)
    f_true = k_inv.T @ r.T @ skew(t) @ k_inv
    return pairs, f_true


def random_rotation(rng):
    q = rng.normal(size=4)
    return Rotation.from_quat(q / np.linalg.norm(q)).as_matrix()


def noise_texture(shape, seed=0, sigma=2.0):
    """Band-limited random texture, uint8, plenty of trackable structure."""
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random(shape), sigma)
    img = img - img.min()
    img = img / img.max()
    return np.round(img * 255).astype(np.uint8)
