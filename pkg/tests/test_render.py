"""Synthetic renderer tests: determinism, geometry consistency, ground truth."""

import numpy as np
import pytest

from msfusion.errors import EmptyScene, NonPositiveDepth, TargetBehindCamera
from msfusion.geometry import (
    CameraIntrinsics,
    DistortionCoefficients,
    RigidPose,
    project,
)
from msfusion.render import (
    camera_rays,
    ground_truth_map,
    patch_footprint,
    render_scene,
    render_target_depth,
    render_target_frame,
    render_target_view,
)
from msfusion.rig import (
    MultispectralFrame,
    PatchSpec,
    PlaneSpec,
    RigConfig,
    SceneSpec,
    TargetSpec,
    default_rig,
    default_scene,
    default_target_views,
    target_view_pose,
)


@pytest.fixture(scope="module")
def rig():
    return default_rig()


@pytest.fixture(scope="module")
def target():
    return TargetSpec()


class TestTargetRendering:
    def test_fronto_parallel_blob_count(self, rig, target):
        pose = target_view_pose(target, 0.55)
        img = render_target_view(rig.intrinsics["rgb"], pose, target, "rgb")
        # simple segmentation: dark pixels against the plate
        from scipy import ndimage
        thr = img.mean() - 0.5 * img.std()
        _, count = ndimage.label(img < thr, structure=np.ones((3, 3), bool))
        assert count == target.rows * target.cols

    def test_plate_and_hole_levels(self, rig, target):
        pose = target_view_pose(target, 0.55)
        img = render_target_view(rig.intrinsics["rgb"], pose, target, "rgb")
        plate, hole = target.contrast["rgb"]
        assert img.max() == pytest.approx(plate, abs=1e-12)
        assert img.min() == pytest.approx(hole, abs=1e-3)  # soft edge, deep core

    def test_centroids_sit_on_projected_centers(self, rig, target):
        # the renderer's core contract: blob centroids match the projected
        # circle centers to well under a millipixel on float rasters
        from msfusion.detect import detect_blobs, order_grid
        for cam in ("rgb", "thermal", "uv"):
            intr = rig.intrinsics[cam]
            pose = rig.poses[cam].inverse() @ target_view_pose(
                target, 0.6, tilt_x_deg=15, tilt_y_deg=-10, roll_deg=5)
            img = render_target_view(intr, pose, target, cam)
            truth = project(pose.apply(target.circle_centers()), intr)
            got = order_grid(detect_blobs(img, expected_count=len(truth)),
                             target.rows, target.cols)
            err = np.linalg.norm(got - truth, axis=1).max()
            assert err < 2e-3, f"{cam}: worst centroid off by {err:.2e} px"

    def test_noise_is_seeded_and_deterministic(self, rig, target):
        pose = target_view_pose(target, 0.55)
        a = render_target_view(rig.intrinsics["rgb"], pose, target, "rgb",
                               noise_sigma=0.01, rng=42)
        b = render_target_view(rig.intrinsics["rgb"], pose, target, "rgb",
                               noise_sigma=0.01, rng=42)
        c = render_target_view(rig.intrinsics["rgb"], pose, target, "rgb",
                               noise_sigma=0.01, rng=43)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_target_behind_camera_raises(self, rig, target):
        behind = RigidPose(np.eye(3), np.array([0.0, 0.0, -0.6]))
        with pytest.raises(TargetBehindCamera):
            render_target_view(rig.intrinsics["rgb"], behind, target, "rgb")

    def test_target_depth_matches_board_plane(self, rig, target):
        pose = target_view_pose(target, 0.6, tilt_x_deg=20)
        depth = render_target_depth(rig.intrinsics["rgb"], pose)
        assert np.all(depth > 0)
        # the recovered 3D points must satisfy the board plane equation
        rays, _ = camera_rays(rig.intrinsics["rgb"])
        dirs = np.concatenate([rays, np.ones(rays.shape[:2] + (1,))], axis=-1)
        pts = dirs * depth[..., None]
        normal = pose.rotation[:, 2]
        off = (pts @ normal) - normal @ pose.translation
        assert np.abs(off).max() < 1e-9

    def test_render_target_frame_shapes_and_dtypes(self, rig, target):
        frame = render_target_frame(rig, target, target_view_pose(target, 0.55),
                                    timestamp=7)
        assert frame.rgb.shape == (480, 640, 3) and frame.rgb.dtype == np.uint8
        assert frame.thermal.shape == (120, 160) and frame.thermal.dtype == np.uint16
        assert frame.uv.shape == (480, 640) and frame.uv.dtype == np.uint8
        assert frame.depth.shape == (480, 640) and frame.depth.dtype == np.uint16
        assert frame.timestamp == 7
        assert np.all(frame.depth > 0)


class TestSceneRendering:
    def test_deterministic_given_seed(self, rig):
        scene = default_scene()
        a = render_scene(rig, scene, rng=11)
        b = render_scene(rig, scene, rng=11)
        for name in ("rgb", "thermal", "uv", "depth"):
            assert np.array_equal(getattr(a, name), getattr(b, name)), name

    def test_default_scene_fills_depth(self, rig):
        frame = render_scene(rig, default_scene())
        assert np.all(frame.depth > 0)
        # wall is 1 m out; depth must straddle it (mm, optics spread it a bit)
        assert 995 <= frame.depth.min() <= 1005
        assert frame.depth.max() < 2000

    def test_rgb_identical_with_and_without_hidden_patches(self, rig):
        scene = default_scene()
        bare = SceneSpec(planes=scene.planes)
        with_patches = render_scene(rig, scene, rng=3)
        without = render_scene(rig, bare, rng=3)
        assert np.array_equal(with_patches.rgb, without.rgb)
        assert np.array_equal(with_patches.depth, without.depth)
        assert not np.array_equal(with_patches.uv, without.uv)
        assert not np.array_equal(with_patches.thermal, without.thermal)

    def test_patches_touch_only_their_spectrum(self, rig):
        scene = default_scene()
        only_uv = SceneSpec(planes=scene.planes, uv_patches=scene.uv_patches)
        with_uv = render_scene(rig, only_uv)
        bare = render_scene(rig, SceneSpec(planes=scene.planes))
        assert np.array_equal(with_uv.thermal, bare.thermal)
        assert not np.array_equal(with_uv.uv, bare.uv)

    def test_empty_scene_raises(self, rig):
        with pytest.raises(EmptyScene):
            render_scene(rig, SceneSpec(planes=()))
        behind = PlaneSpec(pose=RigidPose(np.eye(3), np.array([-1.0, -1.0, -2.0])),
                           width_m=2.0, height_m=2.0)
        with pytest.raises(EmptyScene):
            render_scene(rig, SceneSpec(planes=(behind,)))

    def test_patch_must_lie_on_declared_plane(self):
        wall = PlaneSpec(pose=RigidPose(np.eye(3), np.array([-1.0, -1.0, 1.0])),
                         width_m=2.0, height_m=2.0)
        with pytest.raises(ValueError):
            SceneSpec(planes=(wall,),
                      uv_patches=(PatchSpec(0, 1.9, 0.5, 0.3, 0.2),))
        with pytest.raises(ValueError):
            SceneSpec(planes=(wall,),
                      thermal_patches=(PatchSpec(3, 0.1, 0.1, 0.2, 0.2),))

    def test_frame_dtype_invariants(self):
        with pytest.raises(ValueError):
            MultispectralFrame(
                rgb=np.zeros((4, 4, 3), dtype=np.uint16),  # wrong dtype
                thermal=np.zeros((2, 2), dtype=np.uint16),
                uv=np.zeros((4, 4), dtype=np.uint8),
                depth=np.zeros((4, 4), dtype=np.uint16))
        with pytest.raises(ValueError):
            MultispectralFrame(
                rgb=np.zeros((4, 4, 3), dtype=np.uint8),
                thermal=np.zeros((2, 2), dtype=np.uint16),
                uv=np.zeros((4, 4), dtype=np.uint8),
                depth=np.zeros((3, 4), dtype=np.uint16))  # not rgb-registered


class TestGroundTruthMap:
    def test_pure_baseline_disparity(self):
        # identical pinhole cameras 20 mm apart, point at 1 m:
        # disparity is exactly -fx * baseline / z = -10 px
        intr = CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)
        rig = RigConfig(
            intrinsics={c: intr for c in ("rgb", "thermal", "uv", "depth")},
            poses={"rgb": RigidPose.identity(),
                   "depth": RigidPose.identity(),
                   "uv": RigidPose(np.eye(3), np.array([0.02, 0.0, 0.0])),
                   "thermal": RigidPose.identity()})
        mapped = ground_truth_map(rig, np.array([320.0, 240.0]), 1.0, "uv")
        assert np.allclose(mapped, [310.0, 240.0], atol=1e-9)

    def test_zero_depth_raises(self, rig):
        with pytest.raises(NonPositiveDepth):
            ground_truth_map(rig, np.array([320.0, 240.0]), 0.0, "uv")

    def test_identity_secondary_is_identity_map(self):
        intr = CameraIntrinsics(
            480.0, 480.0, 320.0, 240.0, 640, 480,
            distortion=DistortionCoefficients(k1=-0.05, k2=0.01))
        rig = RigConfig(
            intrinsics={c: intr for c in ("rgb", "thermal", "uv", "depth")},
            poses={c: RigidPose.identity() for c in ("rgb", "thermal", "uv", "depth")})
        rng = np.random.default_rng(0)
        px = np.column_stack([rng.uniform(50, 590, 64), rng.uniform(50, 430, 64)])
        mapped = ground_truth_map(rig, px, rng.uniform(0.4, 3.0, 64), "thermal")
        assert np.abs(mapped - px).max() < 1e-6

    def test_footprint_present_and_bounded(self, rig):
        scene = default_scene()
        fp_uv = patch_footprint(rig, scene, "uv")
        fp_th = patch_footprint(rig, scene, "thermal")
        assert fp_uv.shape == (480, 640) and fp_th.shape == (480, 640)
        for name, fp in (("uv", fp_uv), ("thermal", fp_th)):
            assert 500 < fp.sum() < 640 * 480 // 4, \
                f"{name} footprint size {fp.sum()} implausible"
        assert not (fp_uv & fp_th).any(), "patches were placed apart"


class TestDefaultViews:
    def test_all_views_keep_target_inside_every_camera(self, rig, target):
        for pose_rig in default_target_views(target):
            for cam in ("rgb", "thermal", "uv"):
                intr = rig.intrinsics[cam]
                pose = rig.poses[cam].inverse() @ pose_rig
                px = project(pose.apply(target.circle_centers()), intr)
                margin = 6.0
                assert np.all(px[:, 0] > margin) and np.all(px[:, 0] < intr.width - margin), \
                    f"{cam}: circles fall off horizontally"
                assert np.all(px[:, 1] > margin) and np.all(px[:, 1] < intr.height - margin), \
                    f"{cam}: circles fall off vertically"
