"""Projection, distortion, and rigid-pose unit tests."""

import numpy as np
import pytest

from msfusion.errors import DimensionMismatch, NonPositiveDepth
from msfusion.geometry import (
    CameraIntrinsics,
    DistortionCoefficients,
    RigidPose,
    average_quaternions,
    axis_angle_from_rotation,
    distort_pixel,
    nearest_rotation,
    project,
    quaternion_from_rotation,
    right_jacobian,
    rodrigues,
    rotation_angle_deg,
    rotation_from_quaternion,
    undistort_pixel,
    unproject,
)


def _intr(fx=500.0, fy=500.0, cx=320.0, cy=240.0, dist=None):
    return CameraIntrinsics(fx, fy, cx, cy, width=640, height=480,
                            distortion=dist or DistortionCoefficients())


class TestProjection:
    def test_radial_distortion_frozen_value(self):
        # point (0.2, 0, 1), k1 = 0.1: r^2 = 0.04, radial = 1.004,
        # u = 500 * 0.2 * 1.004 + 320 = 420.4 exactly
        intr = _intr(dist=DistortionCoefficients(k1=0.1))
        px = project(np.array([0.2, 0.0, 1.0]), intr)
        assert px[0] == pytest.approx(420.4, abs=1e-12)
        assert px[1] == pytest.approx(240.0, abs=1e-12)

    def test_undistort_recovers_pinhole_pixel(self):
        intr = _intr(dist=DistortionCoefficients(k1=0.1))
        ideal = undistort_pixel(np.array([420.4, 240.0]), intr)
        assert np.allclose(ideal, [420.0, 240.0], atol=1e-8)

    def test_projection_scale_covariant_in_depth(self):
        intr = _intr(dist=DistortionCoefficients(k1=-0.08, k2=0.01, p1=1e-3))
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.uniform(-0.5, 0.5, 50),
                               rng.uniform(-0.4, 0.4, 50),
                               rng.uniform(0.5, 3.0, 50)])
        for lam in (0.5, 2.0, 7.3):
            assert np.allclose(project(pts, intr), project(lam * pts, intr),
                               atol=1e-9), f"scaling by {lam} moved pixels"

    def test_nonpositive_depth_raises(self):
        intr = _intr()
        with pytest.raises(NonPositiveDepth):
            project(np.array([0.0, 0.0, -1.0]), intr)
        with pytest.raises(NonPositiveDepth):
            project(np.array([[0.1, 0.1, 1.0], [0.0, 0.0, 0.0]]), intr)
        with pytest.raises(NonPositiveDepth):
            unproject(np.array([320.0, 240.0]), intr, 0.0)

    def test_unproject_project_round_trip(self):
        intr = _intr()
        rng = np.random.default_rng(1)
        px = np.column_stack([rng.uniform(0, 639, 100), rng.uniform(0, 479, 100)])
        depth = rng.uniform(0.2, 5.0, 100)
        pts = unproject(px, intr, depth)
        assert np.allclose(pts[:, 2], depth)
        back = project(pts, intr)  # zero distortion here
        assert np.allclose(back, px, atol=1e-9), "unproject/project is not inverse"

    def test_undistort_distort_identity_within_tolerance(self):
        # round trip must hold to 1e-6 px for normalized radii below 0.8
        coeff_sets = [
            DistortionCoefficients(k1=0.1),
            DistortionCoefficients(k1=-0.12, k2=0.02),
            DistortionCoefficients(k1=0.05, k2=-0.01, p1=8e-4, p2=-5e-4, k3=0.002),
        ]
        rng = np.random.default_rng(2)
        ang = rng.uniform(0, 2 * np.pi, 400)
        rad = rng.uniform(0, 0.8, 400)
        xy = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        for dist in coeff_sets:
            intr = _intr(dist=dist)
            ideal = intr.denormalize(xy)
            observed = distort_pixel(ideal, intr)
            back = undistort_pixel(observed, intr)
            err = np.abs(back - ideal).max()
            assert err < 1e-6, f"round trip error {err:.2e} px for {dist}"

    def test_skew_handled_in_both_directions(self):
        intr = CameraIntrinsics(500.0, 510.0, 320.0, 240.0, 640, 480, skew=1.5)
        pt = np.array([0.2, -0.1, 1.0])
        px = project(pt, intr)
        expected_v = 510.0 * -0.1 + 240.0
        expected_u = 500.0 * 0.2 + 1.5 * -0.1 + 320.0
        assert np.allclose(px, [expected_u, expected_v])
        assert np.allclose(unproject(px, intr, 1.0), pt, atol=1e-12)

    def test_principal_point_must_lie_inside_image(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(500.0, 500.0, 700.0, 240.0, 640, 480)
        with pytest.raises(ValueError):
            CameraIntrinsics(-1.0, 500.0, 320.0, 240.0, 640, 480)


class TestRotations:
    def test_rodrigues_axis_angle_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            w = rng.normal(size=3) * rng.uniform(1e-10, 3.0)
            R = rodrigues(w)
            assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
            w_back = axis_angle_from_rotation(R)
            assert np.allclose(rodrigues(w_back), R, atol=1e-9)

    def test_axis_angle_near_pi_is_stable(self):
        for axis in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0]),
                     np.array([0.6, -0.64, 0.48])):
            axis = axis / np.linalg.norm(axis)
            w = axis * (np.pi - 1e-9)
            R = rodrigues(w)
            assert np.allclose(rodrigues(axis_angle_from_rotation(R)), R, atol=1e-7)

    def test_right_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            w = rng.normal(size=3) * rng.uniform(0.0, 2.5)
            v = rng.normal(size=3)
            J = right_jacobian(w)
            # d(R(w) v)/dw  ==  -R(w) [v]x J_r(w)
            eps = 1e-7
            num = np.empty((3, 3))
            for i in range(3):
                dw = np.zeros(3)
                dw[i] = eps
                num[:, i] = (rodrigues(w + dw) @ v - rodrigues(w - dw) @ v) / (2 * eps)
            Kv = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
            ana = -rodrigues(w) @ Kv @ J
            assert np.allclose(num, ana, atol=1e-6), f"right Jacobian wrong at w={w}"

    def test_quaternion_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            R = rodrigues(rng.normal(size=3) * rng.uniform(0, 3.0))
            q = quaternion_from_rotation(R)
            assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)
            assert np.allclose(rotation_from_quaternion(q), R, atol=1e-12)

    def test_average_quaternions_aligns_signs(self):
        q = quaternion_from_rotation(rodrigues([0.3, -0.2, 0.5]))
        # identical rotations with mixed signs must average to that rotation
        mean = average_quaternions([q, -q, q, -q])
        assert np.allclose(rotation_from_quaternion(mean),
                           rotation_from_quaternion(q), atol=1e-12)

    def test_average_quaternions_small_spread(self):
        rng = np.random.default_rng(6)
        base = np.array([0.4, 0.1, -0.3])
        quats = []
        for _ in range(20):
            quats.append(quaternion_from_rotation(
                rodrigues(base + rng.normal(scale=1e-3, size=3))))
        mean = rotation_from_quaternion(average_quaternions(quats))
        assert rotation_angle_deg(mean, rodrigues(base)) < 0.05

    def test_nearest_rotation_projects_back(self):
        rng = np.random.default_rng(7)
        R = rodrigues([0.2, 0.9, -0.4])
        noisy = R + rng.normal(scale=1e-3, size=(3, 3))
        R2 = nearest_rotation(noisy)
        assert np.allclose(R2.T @ R2, np.eye(3), atol=1e-12)
        assert rotation_angle_deg(R, R2) < 0.2


class TestRigidPose:
    def test_compose_matches_matrix_product(self):
        a = RigidPose.from_axis_angle([0.1, 0.2, -0.3], [0.5, 0.0, 1.0])
        b = RigidPose.from_axis_angle([-0.4, 0.0, 0.2], [0.0, -0.1, 0.3])
        ab = a @ b
        assert np.allclose(ab.matrix, a.matrix @ b.matrix, atol=1e-12)
        p = np.array([0.3, -0.2, 2.0])
        assert np.allclose(ab.apply(p), a.apply(b.apply(p)), atol=1e-12)

    def test_inverse(self):
        pose = RigidPose.from_axis_angle([0.3, -0.1, 0.7], [1.0, 2.0, 3.0])
        ident = pose @ pose.inverse()
        assert np.allclose(ident.matrix, np.eye(4), atol=1e-12)
        rng = np.random.default_rng(8)
        pts = rng.normal(size=(30, 3))
        assert np.allclose(pose.inverse().apply(pose.apply(pts)), pts, atol=1e-12)

    def test_rejects_non_orthonormal_rotation(self):
        bad = np.eye(3)
        bad[0, 0] = 1.0 + 1e-6  # far outside the 1e-9 gate
        with pytest.raises(ValueError):
            RigidPose(bad, np.zeros(3))
        with pytest.raises(ValueError):
            RigidPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))  # det -1
        with pytest.raises(DimensionMismatch):
            RigidPose(np.eye(4), np.zeros(3))

    def test_matrix_round_trip(self):
        pose = RigidPose.from_axis_angle([0.2, 0.1, 0.05], [0.1, -0.2, 0.7])
        again = RigidPose.from_matrix(pose.matrix)
        assert np.allclose(again.rotation, pose.rotation)
        assert np.allclose(again.translation, pose.translation)
