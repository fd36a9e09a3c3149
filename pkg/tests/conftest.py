import numpy as np
import pytest

from pwscert import (
    CameraModel,
    ColoredPointCloud,
    builtin_train,
    render,
)
from pwscert.demo import build_demo_scene, demo_camera, demo_specs
from pwscert.geometry import MotionValue
from pwscert.scenes import ShapeClass


def random_visible_points(rng, n, z_lo=1.2, z_hi=3.0, spread=0.9):
    """Points comfortably inside the frustum with depth margins for all axes."""
    z = rng.uniform(z_lo, z_hi, n)
    x = rng.uniform(-spread, spread, n) * z * 0.45
    y = rng.uniform(-spread, spread, n) * z * 0.45
    return np.column_stack([x, y, z])


def axis_radius(axis):
    """Motion radii keeping random test points visible over the range."""
    return 0.25 if not axis.is_rotation else 0.12


@pytest.fixture(scope="session")
def cam():
    return CameraModel(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100)


@pytest.fixture(scope="session")
def small_cam():
    return CameraModel(fx=16.0, fy=16.0, cx=8.0, cy=8.0, width=16, height=16)


@pytest.fixture(scope="session")
def demo_cam():
    return demo_camera()


@pytest.fixture(scope="session")
def demo_corpus():
    scenes = [
        build_demo_scene(cls, seed) for cls in ShapeClass for seed in range(2)
    ]
    return scenes, demo_camera()


@pytest.fixture(scope="session")
def demo_classifier(demo_corpus):
    scenes, cam = demo_corpus
    spec = demo_specs()[0]
    dataset = [
        (render(s.cloud, MotionValue(spec, 0.0), cam), s.label) for s in scenes
    ]
    return builtin_train(dataset, noise_sigma=0.5, augment_count=6, seed=11)


@pytest.fixture
def two_point_cloud():
    """Two points sharing a pixel: the nearer wins."""
    return ColoredPointCloud(
        points=np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 1.0]]),
        colors=np.array([[0.9], [0.1]]),
    )
