import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from orthostitch.geometry import (
    Intrinsics,
    Pose,
    ProjectionMatrix,
    backproject_pixel,
    compose_projection,
    default_intrinsics,
    canonical_pose,
    orthographic_project,
    project,
    pseudo_inverse,
    rotation_about_axis,
)

import oracles


def random_pose(rng):
    R = Rotation.random(random_state=rng).as_matrix()
    t = rng.uniform(-200, 200, size=3)
    return Pose(R, t)


def random_intrinsics(rng):
    w = int(rng.integers(64, 640))
    h = int(rng.integers(64, 640))
    return Intrinsics(
        focal_length_px=float(rng.uniform(500, 2000)),
        principal_point=(float(rng.uniform(0.3, 0.7) * (w - 1)),
                         float(rng.uniform(0.3, 0.7) * (h - 1))),
        detector_size=(w, h),
        pixel_spacing=float(rng.uniform(0.2, 2.0)),
    )


def points_in_front(pose, rng, n):
    """World points with camera depth in [100, 900] mm."""
    cam_pts = np.column_stack([
        rng.uniform(-100, 100, n),
        rng.uniform(-100, 100, n),
        rng.uniform(100, 900, n),
    ])
    return (cam_pts - pose.translation) @ pose.rotation


class TestComposeProjection:
    def test_identity_camera(self):
        intr = Intrinsics(1.0, (0.0, 0.0), (1, 1), 1.0)
        P = compose_projection(intr, Pose.identity())
        np.testing.assert_array_equal(P.P, np.hstack([np.eye(3), np.zeros((3, 1))]))

    def test_on_axis_point(self):
        intr = Intrinsics(1.0, (0.0, 0.0), (1, 1), 1.0)
        for z in (0.5, 1.0, 10.0, 1234.5):
            P = compose_projection(intr, Pose(np.eye(3), np.array([0, 0, z])))
            np.testing.assert_allclose(project(P, [0.0, 0.0, 0.0]), [0.0, 0.0])

    def test_matches_two_step_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            intr = random_intrinsics(rng)
            pose = random_pose(rng)
            P = compose_projection(intr, pose)
            pts = points_in_front(pose, rng, 100)
            expected = oracles.two_step_project(
                intr.focal_length_px, intr.principal_point,
                pose.rotation, pose.translation, pts)
            np.testing.assert_allclose(project(P, pts), expected, atol=1e-9)

    def test_rejects_non_orthonormal_rotation(self):
        with pytest.raises(ValueError):
            Pose(np.eye(3) * 1.001, np.zeros(3))

    def test_serialization_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        P = compose_projection(random_intrinsics(rng), random_pose(rng))
        path = tmp_path / "P.json"
        P.to_json(path)
        P2 = ProjectionMatrix.from_json(path)
        np.testing.assert_array_equal(P.P, P2.P)
        assert P2.pixel_spacing == P.pixel_spacing
        assert P2.detector_size == P.detector_size


class TestPseudoInverse:
    def test_canonical_camera(self):
        P = np.hstack([np.eye(3), np.zeros((3, 1))])
        expected = np.vstack([np.eye(3), np.zeros((1, 3))])
        np.testing.assert_allclose(pseudo_inverse(P), expected, atol=1e-12)

    def test_right_inverse_property(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            P = rng.normal(size=(3, 4))
            pinv = pseudo_inverse(P)
            x = rng.normal(size=(3, 50))
            np.testing.assert_allclose(P @ pinv @ x, x, atol=1e-9)

    def test_matches_svd_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            P = rng.normal(size=(3, 4))
            np.testing.assert_allclose(pseudo_inverse(P),
                                       oracles.svd_pseudo_inverse(P), atol=1e-9)

    def test_rank_deficient_rejected(self):
        P = np.zeros((3, 4))
        P[0, 0] = P[1, 1] = 1.0
        with pytest.raises(ValueError):
            pseudo_inverse(P)


class TestBackprojectPixel:
    def setup_method(self):
        self.intr = default_intrinsics()
        self.P = compose_projection(self.intr, canonical_pose(self.intr))

    def test_full_cone_depth_window(self):
        ray = backproject_pixel(self.P, self.intr.principal_point, d=1.0)
        assert ray.t_range[0] == 0.0                      # starts at the source
        assert ray.t_range[1] == pytest.approx(1000.0)    # ends on the detector

    def test_half_depth_window(self):
        ray = backproject_pixel(self.P, self.intr.principal_point, d=0.5)
        z = ray.point_at(np.array(ray.t_range))[:, 2]
        # detector plane z=0 up to 50% of the focal length
        np.testing.assert_allclose(sorted(z), [0.0, 500.0], atol=1e-9)

    def test_principal_pixel_axial_ray(self):
        ray = backproject_pixel(self.P, self.intr.principal_point, d=1.0)
        np.testing.assert_allclose(np.abs(ray.direction), [0, 0, 1], atol=1e-9)
        np.testing.assert_allclose(ray.origin, [0, 0, 1000.0], atol=1e-9)

    @pytest.mark.parametrize("d", [0.0, -0.1, 1.5])
    def test_invalid_depth_fraction(self, d):
        with pytest.raises(ValueError):
            backproject_pixel(self.P, (320, 320), d)

    def test_pixel_outside_detector(self):
        with pytest.raises(ValueError):
            backproject_pixel(self.P, (10000, 10), d=0.5)

    def test_reprojection_closure(self):
        # invariant: 10 samples along any valid segment reproject to the pixel
        rng = np.random.default_rng(42)
        for _ in range(50):
            intr = random_intrinsics(rng)
            P = compose_projection(intr, random_pose(rng))
            w, h = intr.detector_size
            pixel = (rng.uniform(0, w - 1), rng.uniform(0, h - 1))
            d = rng.uniform(0.05, 1.0)
            ray = backproject_pixel(P, pixel, d)
            reproj = project(P, ray.sample(10))
            np.testing.assert_allclose(reproj, np.tile(pixel, (10, 1)), atol=1e-6)

    def test_depth_window_scales_with_d(self):
        rng = np.random.default_rng(5)
        intr = random_intrinsics(rng)
        P = compose_projection(intr, random_pose(rng))
        pixel = (intr.detector_size[0] / 3, intr.detector_size[1] / 3)
        for d in (0.25, 0.5, 1.0):
            ray = backproject_pixel(P, pixel, d)
            depths = P.depth_of(ray.point_at(np.array(ray.t_range)))
            lo, hi = sorted(depths)
            assert hi == pytest.approx(intr.sdd_mm, rel=1e-9)
            assert lo == pytest.approx((1 - d) * intr.sdd_mm, rel=1e-9)


class TestPseudoInverseIdentityInvariant:
    def test_frobenius_residual(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            P = rng.normal(size=(3, 4))
            res = P @ pseudo_inverse(P) - np.eye(3)
            assert np.linalg.norm(res, "fro") < 1e-9


class TestOrthographicProject:
    def test_identity_drops_depth(self):
        np.testing.assert_array_equal(
            orthographic_project(np.eye(3), [3.0, 7.0, 42.0]), [3.0, 7.0])

    def test_depth_invariance(self):
        rng = np.random.default_rng(1)
        R = Rotation.random(random_state=rng).as_matrix()
        q = rng.normal(size=3)
        r3 = R[2]
        for t in (-1000.0, -0.5, 2.0, 314.0):
            a = orthographic_project(R, q)
            b = orthographic_project(R, q + t * r3)
            np.testing.assert_allclose(a, b, atol=1e-12 * max(1, abs(t)))

    def test_quarter_turn_about_x(self):
        # hand-computed: rows (1,0,0) and (0,0,1) pick out X and Z
        R = np.array([[1.0, 0.0, 0.0],
                      [0.0, 0.0, 1.0],
                      [0.0, -1.0, 0.0]])
        np.testing.assert_allclose(orthographic_project(R, [1.0, 2.0, 3.0]),
                                   [1.0, 3.0], atol=1e-12)

    def test_five_dof_rigid_motion(self):
        # translating the scene along the viewing direction leaves the image put
        rng = np.random.default_rng(17)
        for _ in range(20):
            R = Rotation.random(random_state=rng).as_matrix()
            pts = rng.normal(size=(8, 3)) * 50
            alpha = rng.uniform(-500, 500)
            shifted = pts + alpha * R[2]
            np.testing.assert_allclose(orthographic_project(R, pts),
                                       orthographic_project(R, shifted),
                                       atol=1e-9)

    def test_rotation_helper_matches_scipy(self):
        R = rotation_about_axis([0, 1, 0], 30.0)
        expected = Rotation.from_euler("y", 30.0, degrees=True).as_matrix()
        np.testing.assert_allclose(R, expected, atol=1e-12)
