"""Self-tests for the reference implementations the suite leans on."""

import numpy as np
import pytest

import oracles


class TestAnalyticParallax:
    def test_equal_depths_is_zero(self):
        scene = oracles.TwoPlaneScene(z1_mm=700.0, z2_mm=700.0, translation_mm=80.0)
        assert oracles.analytic_parallax(scene, 1500.0) == 0.0

    def test_pure_rotation_is_zero(self):
        scene = oracles.TwoPlaneScene(z1_mm=500.0, z2_mm=900.0, translation_mm=0.0)
        assert oracles.analytic_parallax(scene, 1500.0) == 0.0

    def test_reference_case(self):
        scene = oracles.TwoPlaneScene(z1_mm=800.0, z2_mm=1000.0, translation_mm=50.0)
        assert oracles.analytic_parallax(scene, 1000.0) == pytest.approx(12.5,
                                                                         abs=1e-12)

    def test_nonpositive_depth_rejected(self):
        with pytest.raises(ValueError):
            oracles.TwoPlaneScene(z1_mm=0.0, z2_mm=1.0, translation_mm=1.0)


class TestHomography:
    def test_fit_recovers_exact_planar_mapping(self):
        # algebraic: fronto-parallel plane + lateral translation = 2D shift
        f, z1, t = 1000.0, 800.0, 50.0

        def proj_a(p):
            return np.array([f * p[0] / p[2], f * p[1] / p[2]])

        def proj_b(p):
            return np.array([f * (p[0] - t) / p[2], f * p[1] / p[2]])

        plane_pts = [np.array([x, y, z1]) for x in (-100, 0, 100)
                     for y in (-100, 0, 100)]
        H = oracles.fit_homography([proj_b(p) for p in plane_pts],
                                   [proj_a(p) for p in plane_pts])
        # held-out plane points map within 0.5 px (they map exactly)
        for p in [np.array([37.0, -81.0, z1]), np.array([-3.0, 5.0, z1])]:
            err = np.linalg.norm(oracles.apply_homography(H, proj_b(p))[0]
                                 - proj_a(p))
            assert err < 0.5

        # an off-plane point misaligns by exactly the analytic parallax
        z2 = 1000.0
        q = np.array([20.0, 10.0, z2])
        residual = np.linalg.norm(oracles.apply_homography(H, proj_b(q))[0]
                                  - proj_a(q))
        scene = oracles.TwoPlaneScene(z1_mm=z1, z2_mm=z2, translation_mm=t)
        assert residual == pytest.approx(oracles.analytic_parallax(scene, f),
                                         abs=1.0)

    def test_identity_warp_averages(self):
        rng = np.random.default_rng(0)
        a = rng.random((12, 12))
        b = rng.random((12, 12))
        out = oracles.homography_stitch(a, b, np.eye(3))
        np.testing.assert_allclose(out, (a + b) / 2.0, atol=1e-12)

    def test_singular_homography_rejected(self):
        with pytest.raises(ValueError, match="singular"):
            oracles.homography_stitch(np.zeros((4, 4)), np.zeros((4, 4)),
                                      np.zeros((3, 3)))


class TestNaiveDfts:
    def test_dft2_matches_shifted_fft(self):
        rng = np.random.default_rng(1)
        img = rng.random((8, 8))
        ref = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(img)))
        np.testing.assert_allclose(oracles.naive_dft2_centered(img), ref,
                                   atol=1e-9)

    def test_idft2_inverts_dft2(self):
        rng = np.random.default_rng(2)
        img = rng.random((6, 8))
        back = oracles.naive_idft2_centered(oracles.naive_dft2_centered(img))
        np.testing.assert_allclose(back.real, img, atol=1e-9)

    def test_dft3_dc_is_total_mass(self):
        rng = np.random.default_rng(3)
        vol = rng.random((4, 4, 4))
        spec = oracles.naive_dft3_centered(vol)
        assert spec[2, 2, 2] == pytest.approx(vol.sum(), rel=1e-12)


def test_svd_pinv_defining_properties():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 4))
    pinv = oracles.svd_pseudo_inverse(A)
    np.testing.assert_allclose(A @ pinv @ A, A, atol=1e-9)
    np.testing.assert_allclose(pinv @ A @ pinv, pinv, atol=1e-9)
