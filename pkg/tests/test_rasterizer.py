import math

import numpy as np
import pytest

from pwscert import (
    Axis,
    ColoredPointCloud,
    MotionSpec,
    ShapeMismatch,
    adjacent_frame_error,
    load_cloud,
    load_image,
    render,
    render_sweep,
    save_cloud,
    save_image,
)
from pwscert.geometry import MotionValue
from pwscert.rasterizer import zbuffer_winners

from conftest import random_visible_points

TX1 = MotionSpec(Axis.TX, 1.0)


def at_rest(spec=TX1):
    return MotionValue(spec, 0.0)


class TestRender:
    def test_nearer_point_wins(self, cam, two_point_cloud):
        img = render(two_point_cloud, at_rest(), cam)
        assert img[0, 50, 50] == 0.1

    def test_empty_region_takes_background(self, cam, two_point_cloud):
        img = render(two_point_cloud, at_rest(), cam, background=0.25)
        assert img[0, 0, 0] == 0.25
        assert np.count_nonzero(img != 0.25) == 1

    def test_integer_position_lands_in_its_cell(self, cam):
        # projection (50.0, 50.0) exactly: floor puts it in pixel (50, 50)
        cloud = ColoredPointCloud(np.array([[0.0, 0.0, 2.0]]), np.array([[1.0]]))
        img = render(cloud, at_rest(), cam)
        assert img[0, 50, 50] == 1.0

    def test_pixel_convention_row_is_v(self, cam):
        # a point below the axis (Y>0) moves to a larger row, same column
        cloud = ColoredPointCloud(np.array([[0.0, 0.04, 2.0]]), np.array([[1.0]]))
        img = render(cloud, at_rest(), cam)
        assert img[0, 52, 50] == 1.0  # v = 100*0.04/2 + 50 = 52

    def test_behind_camera_skipped(self, cam):
        cloud = ColoredPointCloud(
            np.array([[0.0, 0.0, 2.0], [0.0, 0.0, -1.0]]),
            np.array([[0.9], [0.2]]),
        )
        img = render(cloud, at_rest(), cam)
        assert img[0, 50, 50] == 0.9

    def test_depth_tie_breaks_by_lowest_index(self, cam):
        cloud = ColoredPointCloud(
            np.array([[0.0, 0.0, 2.0], [0.001, 0.001, 2.0]]),
            np.array([[0.3], [0.7]]),
        )
        img = render(cloud, at_rest(), cam)
        assert img[0, 50, 50] == 0.3

    def test_deterministic(self, cam):
        rng = np.random.default_rng(0)
        cloud = ColoredPointCloud(
            random_visible_points(rng, 500), rng.uniform(0, 1, (500, 3))
        )
        m = MotionValue(MotionSpec(Axis.RY, 0.05), 0.021)
        a = render(cloud, m, cam)
        b = render(cloud, m, cam)
        assert a.tobytes() == b.tobytes()

    def test_occlusion_exhaustive_recheck(self, small_cam):
        rng = np.random.default_rng(4)
        n = 800
        cloud = ColoredPointCloud(
            random_visible_points(rng, n, z_lo=1.0, z_hi=4.0),
            rng.uniform(0, 1, (n, 1)),
        )
        m = MotionValue(MotionSpec(Axis.RX, 0.1), 0.04)
        winners = zbuffer_winners(cloud, m.spec.axis, m.value, small_cam)
        from pwscert.geometry import project_points

        uv, depth = project_points(cloud.points, m.spec.axis, m.value, small_cam)
        for flat, w in enumerate(winners):
            r, c = divmod(flat, small_cam.width)
            best, best_d = -1, math.inf
            for i in range(n):
                if depth[i] <= 0:
                    continue
                if math.floor(uv[i, 1]) == r and math.floor(uv[i, 0]) == c:
                    if depth[i] < best_d:
                        best, best_d = i, depth[i]
            assert w == best

    def test_all_axes_identical_at_origin(self, cam):
        rng = np.random.default_rng(8)
        cloud = ColoredPointCloud(
            random_visible_points(rng, 300), rng.uniform(0, 1, (300, 2))
        )
        ref = render(cloud, MotionValue(MotionSpec(Axis.TX, 0.5), 0.0), cam)
        for axis in Axis:
            img = render(cloud, MotionValue(MotionSpec(axis, 0.5), 0.0), cam)
            assert img.tobytes() == ref.tobytes()


class TestRenderSweep:
    def test_single_value_equals_render(self, cam, two_point_cloud):
        spec = MotionSpec(Axis.TZ, 0.2)
        frames = render_sweep(two_point_cloud, spec, cam, [0.0])
        direct = render(two_point_cloud, MotionValue(spec, 0.0), cam)
        assert frames[0].tobytes() == direct.tobytes()

    def test_on_axis_point_invariant_under_rz(self, cam):
        cloud = ColoredPointCloud(np.array([[0.0, 0.0, 2.0]]), np.array([[0.8]]))
        spec = MotionSpec(Axis.RZ, 0.3)
        frames = render_sweep(cloud, spec, cam, [-0.3, 0.0, 0.3])
        assert frames[0].tobytes() == frames[1].tobytes() == frames[2].tobytes()

    def test_sweep_stays_in_range(self, cam):
        rng = np.random.default_rng(2)
        cloud = ColoredPointCloud(
            random_visible_points(rng, 400), rng.uniform(0, 1, (400, 3))
        )
        spec = MotionSpec(Axis.TY, 0.15)
        frames = render_sweep(cloud, spec, cam, np.linspace(-0.15, 0.15, 11))
        for a, b in zip(frames, frames[1:]):
            err = adjacent_frame_error(a, b)
            assert math.isfinite(err)
        for f in frames:
            assert f.min() >= 0.0 and f.max() <= 1.0


class TestAdjacentFrameError:
    def test_identical_frames(self):
        img = np.full((3, 4, 4), 0.5)
        assert adjacent_frame_error(img, img) == 0.0

    def test_single_pixel_formula(self):
        a = np.zeros((1, 1, 1))
        b = np.ones((1, 1, 1))
        assert adjacent_frame_error(a, b) == pytest.approx(math.sqrt(0.5), rel=1e-15)

    def test_matches_fsum_oracle(self):
        rng = np.random.default_rng(6)
        a = rng.uniform(0, 1, (3, 17, 13))
        b = rng.uniform(0, 1, (3, 17, 13))
        # independent accumulation: exact summation in reversed order
        sq = [(x - y) ** 2 for x, y in zip(a.ravel()[::-1], b.ravel()[::-1])]
        oracle = math.sqrt(0.5 * math.fsum(sq))
        assert adjacent_frame_error(a, b) == pytest.approx(oracle, abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adjacent_frame_error(np.zeros((1, 2, 2)), np.zeros((1, 3, 2)))


class TestFileFormats:
    def test_image_roundtrip(self, tmp_path):
        rng = np.random.default_rng(12)
        img = rng.uniform(0, 1, (3, 6, 5)).astype(np.float32).astype(np.float64)
        path = tmp_path / "frame.pwsi"
        save_image(path, img)
        raw = path.read_bytes()
        assert raw[:5] == b"PWSI1"
        k, h, w = np.frombuffer(raw[5:17], dtype="<u4")
        assert (k, h, w) == (3, 6, 5)
        back = load_image(path)
        np.testing.assert_array_equal(back, img)

    def test_image_layout_is_channel_row_column(self, tmp_path):
        img = np.arange(12, dtype=np.float64).reshape(2, 3, 2) / 12.0
        path = tmp_path / "f.pwsi"
        save_image(path, img)
        raw = np.frombuffer(path.read_bytes()[17:], dtype="<f4")
        np.testing.assert_allclose(raw, img.ravel(order="C"), rtol=1e-7)

    def test_cloud_roundtrip(self, tmp_path):
        rng = np.random.default_rng(13)
        cloud = ColoredPointCloud(
            random_visible_points(rng, 40), rng.uniform(0, 1, (40, 2))
        )
        path = tmp_path / "scene.pwspc"
        save_cloud(path, cloud)
        first = path.read_text().splitlines()[0]
        assert first == "PWSPC1 40 2"
        back = load_cloud(path)
        np.testing.assert_array_equal(back.points, cloud.points)
        np.testing.assert_array_equal(back.colors, cloud.colors)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.pwsi"
        path.write_bytes(b"NOPE!" + b"\0" * 16)
        with pytest.raises(ValueError):
            load_image(path)


class TestCloudValidation:
    def test_color_range_enforced(self):
        with pytest.raises(ValueError):
            ColoredPointCloud(np.zeros((2, 3)), np.array([[1.2], [0.0]]))

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            ColoredPointCloud(np.zeros((2, 3)), np.zeros((3, 1)))

    def test_empty_cloud_rejected(self):
        with pytest.raises(ShapeMismatch):
            ColoredPointCloud(np.zeros((0, 3)), np.zeros((0, 1)))
