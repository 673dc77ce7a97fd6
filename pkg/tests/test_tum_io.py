import numpy as np
import pytest
from hypothesis import given, strategies as st
from PIL import Image

from dynavo import tum_io
from dynavo.pose import PoseSE3
from dynavo.tum_io import (
    DepthFormatError,
    Trajectory,
    TrajectoryFormatError,
    associate_streams,
    load_depth,
    parse_list_file,
    parse_trajectory_file,
    raw_depth_to_meters,
    save_depth,
    write_trajectory,
)


def test_parse_single_identity_line(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("0.0 0 0 0 0 0 0 1\n")
    traj = parse_trajectory_file(str(p))
    assert len(traj) == 1
    assert np.allclose(traj.poses[0].translation, 0)
    assert np.allclose(traj.poses[0].quaternion, [0, 0, 0, 1])


def test_comments_and_blank_lines_skipped(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("# comment\n\n1.0 0 0 0 0 0 0 1\n2.0 1 0 0 0 0 0 1\n")
    traj = parse_trajectory_file(str(p))
    assert len(traj) == 2


def test_quaternion_normalized_on_parse(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("1.0 0 0 0 0 0 0 2\n")
    traj = parse_trajectory_file(str(p))
    assert np.allclose(traj.poses[0].quaternion, [0, 0, 0, 1], atol=1e-12)


def test_malformed_line_cites_line_number(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("1.0 0 0 0 0 0 0 1\n2.0 bogus\n")
    with pytest.raises(TrajectoryFormatError, match="2"):
        parse_trajectory_file(str(p))


def test_non_monotonic_timestamps_rejected(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("2.0 0 0 0 0 0 0 1\n1.0 0 0 0 0 0 0 1\n")
    with pytest.raises(TrajectoryFormatError):
        parse_trajectory_file(str(p))


def test_trajectory_write_parse_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    stamps = np.sort(rng.uniform(0, 100, 20))
    stamps += np.arange(20) * 1e-3  # keep strictly increasing
    poses = []
    for _ in range(20):
        q = rng.normal(size=4)
        poses.append(PoseSE3(rng.uniform(-2, 2, 3), q / np.linalg.norm(q)))
    traj = Trajectory(stamps, tuple(poses))
    path = tmp_path / "out.txt"
    write_trajectory(traj, str(path))
    back = parse_trajectory_file(str(path))
    assert np.allclose(back.timestamps, stamps, atol=1e-6)
    for a, b in zip(traj.poses, back.poses):
        assert np.allclose(a.translation, b.translation, atol=1e-6)
        # q and -q encode the same rotation
        assert min(np.abs(a.quaternion - b.quaternion).max(),
                   np.abs(a.quaternion + b.quaternion).max()) < 1e-6


def test_associate_exact_match():
    a = [(1.0, "a1"), (2.0, "a2")]
    b = [(1.0, "b1"), (2.0, "b2")]
    pairs = associate_streams(a, b, 0.02)
    assert len(pairs) == 2


def test_associate_within_tolerance():
    assert len(associate_streams([(1.00, 0)], [(1.01, 0)], 0.02)) == 1


def test_associate_beyond_tolerance():
    assert len(associate_streams([(1.00, 0)], [(1.05, 0)], 0.02)) == 0


def test_associate_one_to_one():
    # two candidates in a for one item in b: only one pair may form
    a = [(1.00, 0), (1.005, 1)]
    b = [(1.001, 0)]
    pairs = associate_streams(a, b, 0.02)
    assert len(pairs) == 1


@given(
    st.lists(st.floats(0, 100, allow_nan=False), min_size=0, max_size=30),
    st.lists(st.floats(0, 100, allow_nan=False), min_size=0, max_size=30),
    st.floats(0.001, 5.0),
)
def test_associate_properties(ta, tb, max_diff):
    a = [(t, i) for i, t in enumerate(sorted(ta))]
    b = [(t, i) for i, t in enumerate(sorted(tb))]
    ab = associate_streams(a, b, max_diff)
    ba = associate_streams(b, a, max_diff)
    assert len(ab) == len(ba)
    for (tx, _), (ty, _) in ab:
        assert abs(tx - ty) <= max_diff
    # one-to-one usage
    assert len({id(x) for x, _ in ab}) == len(ab)
    assert len({id(y) for _, y in ab}) == len(ab)
    # output sorted by first stream's timestamps
    firsts = [x[0] for x, _ in ab]
    assert firsts == sorted(firsts)


def test_depth_round_trip_and_scaling(tmp_path):
    arr = np.zeros((8, 10), dtype=np.uint16)
    arr[3, 4] = 5000
    path = tmp_path / "d.png"
    save_depth(arr, str(path))
    raw = load_depth(str(path))
    assert raw.dtype == np.uint16
    assert np.array_equal(raw, arr)
    m = raw_depth_to_meters(raw, 5000.0)
    assert m[3, 4] == 1.0
    assert np.isnan(m[0, 0])  # raw 0 means no measurement


def test_load_depth_rejects_8bit(tmp_path):
    path = tmp_path / "bad.png"
    Image.fromarray(np.zeros((8, 10), dtype=np.uint8), mode="L").save(path)
    with pytest.raises(DepthFormatError):
        load_depth(str(path))


def test_parse_list_file(tmp_path):
    p = tmp_path / "rgb.txt"
    p.write_text("# color images\n1.5 rgb/1.5.png\n2.5 rgb/2.5.png\n")
    entries = parse_list_file(str(p))
    assert entries == [(1.5, "rgb/1.5.png"), (2.5, "rgb/2.5.png")]


def test_trajectory_requires_strictly_increasing():
    with pytest.raises(TrajectoryFormatError):
        Trajectory(np.array([1.0, 1.0]), (PoseSE3.identity(), PoseSE3.identity()))
