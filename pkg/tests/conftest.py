import pytest

from dynavo import synthbench


@pytest.fixture(scope="session")
def moving_scene():
    """Two frames with a clearly moving object: camera slides 5 cm along x
    (epipolar lines horizontal), object climbs 4 cm (about 6.7 px, well off
    its lines)."""
    spec = synthbench.moving_object_spec(
        seed=3, num_frames=2,
        camera_velocity=(0.05, 0.0, 0.0),
        object_velocity=(0.0, 0.04, 0.0),
    )
    f0 = synthbench.render_frame(spec, 0)
    f1 = synthbench.render_frame(spec, 1)
    return spec, f0, f1


@pytest.fixture(scope="session")
def static_scene():
    spec = synthbench.static_scene_spec(
        seed=3, num_frames=2, camera_velocity=(0.05, 0.0, 0.0))
    f0 = synthbench.render_frame(spec, 0)
    f1 = synthbench.render_frame(spec, 1)
    return spec, f0, f1


@pytest.fixture(scope="session")
def small_moving_dataset(tmp_path_factory):
    """A short moving-object sequence written in TUM layout."""
    spec = synthbench.moving_object_spec(seed=11, num_frames=8)
    frames, gt = synthbench.generate_scene(spec)
    root = tmp_path_factory.mktemp("moving8")
    synthbench.write_as_tum(frames, gt, str(root))
    return spec, frames, gt, root


@pytest.fixture(scope="session")
def small_static_dataset(tmp_path_factory):
    spec = synthbench.static_scene_spec(seed=11, num_frames=6)
    frames, gt = synthbench.generate_scene(spec)
    root = tmp_path_factory.mktemp("static6")
    synthbench.write_as_tum(frames, gt, str(root))
    return spec, frames, gt, root
