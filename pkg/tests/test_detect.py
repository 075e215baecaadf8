"""Blob detection and grid ordering tests."""

import numpy as np
import pytest

from msfusion.detect import (
    GridObservation,
    detect_blobs,
    detect_grid,
    lattice_points,
    order_grid,
)
from msfusion.errors import AmbiguousGrid, WrongBlobCount
from msfusion.geometry import project
from msfusion.render import render_target_view
from msfusion.rig import TargetSpec, default_rig, target_view_pose


@pytest.fixture(scope="module")
def rig():
    return default_rig()


@pytest.fixture(scope="module")
def target():
    return TargetSpec()


def _render_view(rig, target, cam="rgb", **view_kwargs):
    pose = rig.poses[cam].inverse() @ target_view_pose(target, **view_kwargs)
    img = render_target_view(rig.intrinsics[cam], pose, target, cam)
    truth = project(pose.apply(target.circle_centers()), rig.intrinsics[cam])
    return img, truth


class TestDetectBlobs:
    def test_centroids_within_a_tenth_pixel(self, rig, target):
        img, truth = _render_view(rig, target, distance_m=0.55, tilt_x_deg=10)
        got = detect_blobs(img, expected_count=35)
        # match detections to nearest truth point
        d = np.linalg.norm(got[:, None, :] - truth[None, :, :], axis=2)
        nearest = d.min(axis=1)
        assert len(got) == 35
        assert nearest.max() < 0.1, f"worst centroid {nearest.max():.3f} px off"

    def test_noisy_8bit_image_still_within_tolerance(self, rig, target):
        pose = rig.poses["rgb"].inverse() @ target_view_pose(target, 0.55)
        img = render_target_view(rig.intrinsics["rgb"], pose, target, "rgb",
                                 noise_sigma=2 / 255, rng=123)
        quantized = np.round(img * 255).astype(np.uint8)
        truth = project(pose.apply(target.circle_centers()), rig.intrinsics["rgb"])
        got = detect_blobs(quantized, expected_count=35)
        d = np.linalg.norm(got[:, None, :] - truth[None, :, :], axis=2)
        assert d.min(axis=1).max() < 0.05

    def test_wrong_blob_count_raises(self, rig, target):
        img, _ = _render_view(rig, target, distance_m=0.55)
        with pytest.raises(WrongBlobCount):
            detect_blobs(img, expected_count=36)

    def test_area_filter_drops_specks_and_smears(self, rig, target):
        img, truth = _render_view(rig, target, distance_m=0.55)
        img = img.copy()
        img[4, 4] = 0.0  # single-pixel speck
        img[460:478, 30:200] = 0.0  # smear far larger than any hole
        got = detect_blobs(img, expected_count=35)
        d = np.linalg.norm(got[:, None, :] - truth[None, :, :], axis=2)
        assert d.min(axis=1).max() < 0.01

    def test_no_blobs_on_flat_image(self):
        assert detect_blobs(np.full((64, 64), 0.8)).shape == (0, 2)
        with pytest.raises(WrongBlobCount):
            detect_blobs(np.full((64, 64), 0.8), expected_count=4)


class TestOrderGrid:
    def test_axis_aligned_3x3_row_major(self):
        pts = np.array([[u * 10.0 + 50, v * 10.0 + 80]
                        for v in range(3) for u in range(3)])
        rng = np.random.default_rng(0)
        shuffled = pts[rng.permutation(9)]
        ordered = order_grid(shuffled, 3, 3)
        assert np.allclose(ordered, pts), "expected row-major from top-left"

    def test_rotation_keeps_logical_order(self):
        # the ordering convention is stable under modest in-plane rotation
        base = np.array([[u * 10.0, v * 10.0] for v in range(3) for u in range(3)])
        center = base.mean(axis=0)
        ang = np.radians(30.0)
        R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        rotated = (base - center) @ R.T + center + 200.0
        rng = np.random.default_rng(1)
        ordered = order_grid(rotated[rng.permutation(9)], 3, 3)
        assert np.allclose(ordered, rotated, atol=1e-9), \
            "rotation by 30 degrees must not change the logical ordering"

    def test_input_permutation_invariance(self):
        pts = np.array([[u * 12.0 + 0.01 * v, v * 11.0] for v in range(5)
                        for u in range(7)]) + 40.0
        rng = np.random.default_rng(2)
        ref = order_grid(pts, 5, 7)
        for _ in range(20):
            got = order_grid(pts[rng.permutation(35)], 5, 7)
            assert np.allclose(got, ref)

    def test_count_mismatch_is_an_error(self):
        pts = np.random.default_rng(3).uniform(0, 100, (8, 2))
        with pytest.raises(ValueError):
            order_grid(pts, 3, 3)

    def test_collinear_points_ambiguous(self):
        pts = np.column_stack([np.linspace(0, 80, 9), np.zeros(9)])
        with pytest.raises(AmbiguousGrid):
            order_grid(pts, 3, 3)

    def test_perspective_view_matches_projection_order(self, rig, target):
        # after ordering, point i must correspond to lattice point i
        img, truth = _render_view(rig, target, distance_m=0.6,
                                  tilt_x_deg=18, tilt_y_deg=-12, roll_deg=10)
        ordered = order_grid(detect_blobs(img, expected_count=35), 5, 7)
        err = np.linalg.norm(ordered - truth, axis=1)
        assert err.max() < 0.01, "ordering disagrees with the projected lattice"


class TestDetectGrid:
    def test_observation_pairing_and_lattice(self, rig, target):
        img, truth = _render_view(rig, target, distance_m=0.55, tilt_y_deg=15)
        obs = detect_grid(img, 5, 7, target.pitch_m, camera_id="rgb", view_id="v0")
        assert len(obs) == 35
        assert obs.camera_id == "rgb" and obs.view_id == "v0"
        assert np.allclose(obs.object_points, lattice_points(5, 7, target.pitch_m))
        assert np.linalg.norm(obs.image_points - truth, axis=1).max() < 0.01

    def test_cross_camera_corner_consistency(self, rig, target):
        # every camera must assign index 0 to the same physical hole
        board = target_view_pose(target, 0.6, tilt_x_deg=12, roll_deg=8)
        corner_world = target.circle_centers()[0]
        for cam in ("rgb", "thermal", "uv"):
            intr = rig.intrinsics[cam]
            pose = rig.poses[cam].inverse() @ board
            img = render_target_view(intr, pose, target, cam)
            obs = detect_grid(img, 5, 7, target.pitch_m, camera_id=cam)
            expected = project(pose.apply(corner_world), intr)
            off = np.linalg.norm(obs.image_points[0] - expected)
            assert off < 0.1, f"{cam} put a different hole first ({off:.2f} px)"

    def test_observation_validation(self):
        with pytest.raises(ValueError):
            GridObservation("rgb", "v", np.zeros((4, 3)), np.zeros((4, 3)))
        with pytest.raises(ValueError):
            GridObservation("rgb", "v", np.zeros((4, 2)), np.zeros((5, 3)))
        bad_plane = np.zeros((4, 3))
        bad_plane[:, 2] = 1.0
        with pytest.raises(ValueError):
            GridObservation("rgb", "v", np.zeros((4, 2)), bad_plane)
