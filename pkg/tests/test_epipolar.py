import numpy as np
import pytest

from dynavo.epipolar import (
    ArityError,
    DegeneracyError,
    DegenerateLineError,
    DynamicPointSet,
    EstimationFailureError,
    FundamentalMatrix,
    MotionCheckConfig,
    detect_dynamic_points,
    eight_point_fundamental,
    epipolar_distance,
    epipolar_distances,
    epipolar_line,
    ransac_fundamental,
)
from dynavo.features import MatchedPair, TRACKED

from support import skew, two_view_pairs

F_TRANS_X = FundamentalMatrix(np.array([
    [0.0, 0.0, 0.0],
    [0.0, 0.0, -1.0],
    [0.0, 1.0, 0.0],
]))


def test_fundamental_matrix_normalized_on_construction():
    f = FundamentalMatrix(np.array([[0, 0, 0], [0, 0, -2], [0, 2, 0.0]]))
    assert abs(np.linalg.norm(f.m) - 1.0) < 1e-12


def test_eight_point_recovers_translation_f():
    pairs, f_true = two_view_pairs(20, t=(1.0, 0.0, 0.0), seed=0)
    f = eight_point_fundamental(pairs)
    # compare up to sign and scale
    ft = f_true / np.linalg.norm(f_true)
    err = min(np.abs(f.m - ft).max(), np.abs(f.m + ft).max())
    assert err < 1e-6
    # analytic F for pure x translation is the cross-product matrix of t
    tx = skew((1.0, 0.0, 0.0)) / np.linalg.norm(skew((1.0, 0.0, 0.0)))
    assert min(np.abs(f.m - tx).max(), np.abs(f.m + tx).max()) < 1e-6


def test_eight_point_residuals_tiny_on_exact_input():
    pairs, _ = two_view_pairs(20, t=(1.0, 0.0, 0.0), seed=0)
    f = eight_point_fundamental(pairs)
    for p in pairs:
        assert abs(p.P2 @ f.m @ p.P1) < 1e-8


def test_eight_point_rank_two_and_unit_norm():
    pairs, _ = two_view_pairs(30, t=(0.3, -0.2, 0.1), seed=1)
    f = eight_point_fundamental(pairs)
    s = np.linalg.svd(f.m, compute_uv=False)
    assert s[2] < 1e-12
    assert abs(np.linalg.norm(f.m) - 1.0) < 1e-12


def test_eight_point_arity():
    pairs, _ = two_view_pairs(7, t=(1.0, 0.0, 0.0), seed=2)
    with pytest.raises(ArityError):
        eight_point_fundamental(pairs)


def test_eight_point_degenerate_input():
    p = MatchedPair(np.array([1.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(DegeneracyError):
        eight_point_fundamental([p] * 10)


def test_epipolar_line_examples():
    line = epipolar_line(F_TRANS_X, (10.0, 5.0))
    c = line.coefficients
    # same geometric line as (0, -1, 5): v = 5
    assert abs(c[0]) < 1e-12
    assert np.allclose(c / c[1], [0.0, 1.0, -5.0])

    f2 = FundamentalMatrix(np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0.0]]))
    c2 = epipolar_line(f2, (1.0, 0.0)).coefficients
    assert abs(c2[0]) < 1e-12 and abs(c2[2]) < 1e-12 and abs(c2[1]) > 0


def test_epipolar_line_scale_invariant_geometry():
    raw = np.array([[0.3, -0.1, 0.4], [0.2, 0.0, -0.5], [0.1, 0.6, 0.2]])
    la = epipolar_line(FundamentalMatrix(raw), (3.0, 7.0)).coefficients
    lb = epipolar_line(FundamentalMatrix(2.0 * raw), (3.0, 7.0)).coefficients
    assert np.allclose(la, lb, atol=1e-12)  # unit-norm F absorbs the scale


def test_epipolar_distance_examples():
    assert epipolar_distance(F_TRANS_X, (10.0, 5.0), (20.0, 5.0)) < 1e-12
    assert abs(epipolar_distance(F_TRANS_X, (10.0, 5.0), (20.0, 8.0)) - 3.0) < 1e-12
    f2 = FundamentalMatrix(np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0.0]]))
    assert abs(epipolar_distance(f2, (1.0, 0.0), (0.0, 1.0)) - 1.0) < 1e-12


def test_epipolar_distance_scale_invariance():
    rng = np.random.default_rng(3)
    raw = rng.normal(size=(3, 3))
    p1, p2 = rng.uniform(0, 100, 2), rng.uniform(0, 100, 2)
    d1 = epipolar_distance(FundamentalMatrix(raw), p1, p2)
    d2 = epipolar_distance(FundamentalMatrix(7.5 * raw), p1, p2)
    assert abs(d1 - d2) < 1e-9


def test_degenerate_line_raises():
    f = FundamentalMatrix(np.array([[0, 0, 0], [0, 0, 0], [0, 0, 1.0]]))
    with pytest.raises(DegenerateLineError):
        epipolar_distance(f, (10.0, 10.0), (5.0, 5.0))
    d = epipolar_distances(f, np.array([[10.0, 10.0]]), np.array([[5.0, 5.0]]))
    assert np.isinf(d[0])


def test_ransac_outlier_free_reduces_to_eight_point():
    pairs, _ = two_view_pairs(100, t=(0.5, 0.1, 0.0), seed=4)
    cfg = MotionCheckConfig(ransac_threshold=0.5, seed=0)
    f, inliers = ransac_fundamental(pairs, cfg)
    assert inliers.all()
    f8 = eight_point_fundamental(pairs)
    assert min(np.abs(f.m - f8.m).max(), np.abs(f.m + f8.m).max()) < 1e-9


def test_ransac_flags_constructed_outliers():
    k_mat = np.array([[500.0, 0, 320], [0, 500.0, 240], [0, 0, 1]])
    pairs, _ = two_view_pairs(70, t=(0.5, 0.0, 0.2), k_mat=k_mat, seed=5,
                              spread=1.5, z_range=(2.0, 6.0))
    rng = np.random.default_rng(6)
    outliers = []
    for i in range(30):
        base, _ = two_view_pairs(1, t=(0.5, 0.0, 0.2), k_mat=k_mat, seed=100 + i,
                                 spread=1.5)
        p = base[0]
        p.p2 = p.p2 + rng.uniform(15, 25, 2) * rng.choice([-1, 1], 2)
        outliers.append(p)
    pairs = pairs + outliers
    cfg = MotionCheckConfig(ransac_threshold=1.0, seed=0)
    f, inliers = ransac_fundamental(pairs, cfg)
    assert inliers[:70].all()
    assert not inliers[70:].any()


def test_ransac_arity_and_failure():
    pairs, _ = two_view_pairs(7, t=(1.0, 0.0, 0.0), seed=7)
    with pytest.raises(ArityError):
        ransac_fundamental(pairs)
    same = [MatchedPair(np.array([1.0, 1.0]), np.array([1.0, 1.0]))] * 12
    with pytest.raises((EstimationFailureError, DegeneracyError)):
        ransac_fundamental(same)


def test_ransac_deterministic_for_fixed_seed():
    pairs, _ = two_view_pairs(60, t=(0.2, 0.3, 0.0), seed=8)
    cfg = MotionCheckConfig(seed=42)
    fa, ia = ransac_fundamental(pairs, cfg)
    fb, ib = ransac_fundamental(pairs, cfg)
    assert np.array_equal(fa.m, fb.m)
    assert np.array_equal(ia, ib)


def test_detect_dynamic_points_requires_points(static_scene):
    _, f0, f1 = static_scene
    with pytest.raises(ArityError):
        detect_dynamic_points(f0.rgb, f1.rgb, np.empty((0, 2)))


def test_detect_dynamic_points_static_scene_empty(static_scene):
    from dynavo.features import detect_corners, to_grayscale

    _, f0, f1 = static_scene
    pts = detect_corners(to_grayscale(f0.rgb), max_count=300)
    pairs, s, f = detect_dynamic_points(f0.rgb, f1.rgb, pts,
                                        MotionCheckConfig(epsilon=1.0, seed=0))
    assert len(s) == 0
    assert isinstance(s, DynamicPointSet)


def test_detect_dynamic_points_flags_the_object(moving_scene):
    from scipy import ndimage

    from dynavo.features import detect_corners, to_grayscale

    _, f0, f1 = moving_scene
    pts = detect_corners(to_grayscale(f0.rgb), max_count=400)
    pairs, s, f = detect_dynamic_points(f0.rgb, f1.rgb, pts,
                                        MotionCheckConfig(epsilon=1.0, seed=0))
    assert len(s) > 10
    # every flagged point lies on or right next to the moving object
    either = (f0.mask.labels > 0) | (f1.mask.labels > 0)
    near_obj = ndimage.binary_dilation(either, iterations=15)
    for u, v in s.points:
        assert near_obj[int(round(v)), int(round(u))]


def test_detect_dynamic_points_deterministic(moving_scene):
    from dynavo.features import detect_corners, to_grayscale

    _, f0, f1 = moving_scene
    pts = detect_corners(to_grayscale(f0.rgb), max_count=300)
    cfg = MotionCheckConfig(seed=1)
    _, sa, fa = detect_dynamic_points(f0.rgb, f1.rgb, pts, cfg)
    _, sb, fb = detect_dynamic_points(f0.rgb, f1.rgb, pts, cfg)
    assert np.array_equal(sa.points, sb.points)
    assert np.array_equal(fa.m, fb.m)


def test_low_parallax_warning():
    from dynavo.epipolar import conditioning_warning_if_low_parallax

    pairs = [MatchedPair(np.array([float(i), float(i)]),
                         np.array([float(i) + 0.01, float(i)]))
             for i in range(20)]
    with pytest.warns(RuntimeWarning):
        conditioning_warning_if_low_parallax(pairs)
