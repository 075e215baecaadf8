"""Synthetic rendering of calibration targets and planar scenes.

Rendering exists to give the pipeline a rig with exactly known ground truth,
so the design favors geometric fidelity over visual realism:

* Target holes are drawn as image-space disks centered on the projected
  circle centers. Drawing the projected *center* (rather than the perspective
  image of the 3D disk, an ellipse) makes the intensity-weighted centroid of
  each blob coincide with the projected center by construction, which is the
  quantity calibration consumes.
* Disk edges follow a C2 quintic smoothstep over a 2 px transition (a crude
  point-spread model) and every pixel is sampled on a 4x4 subgrid. A hard
  binary edge would alias the centroid of small blobs by several millipixels,
  an order of magnitude above what the calibration chain tolerates.
* Scene rasters are ray-cast per pixel through the full distortion model, so
  the rendered depth raster is exactly consistent with the camera geometry
  used everywhere else.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyScene, TargetBehindCamera
from .geometry import (
    CameraIntrinsics,
    RigidPose,
    project,
    undistort_normalized,
    undistort_pixel,
    unproject,
)
from .rig import MultispectralFrame, RigConfig, SceneSpec, TargetSpec

SUPERSAMPLE = 4
EDGE_WIDTH_PX = 2.0
MIN_EDGE_WIDTH_PX = 0.8

_ray_cache: dict = {}


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _disk_coverage(dist_px: np.ndarray, radius_px: float,
                   edge_width: float = EDGE_WIDTH_PX) -> np.ndarray:
    """Coverage in [0, 1]: 1 inside radius - w/2, 0 outside radius + w/2."""
    return _smoothstep((radius_px + edge_width / 2 - dist_px) / edge_width)


def camera_rays(intr: CameraIntrinsics):
    """Undistorted normalized ray directions for every pixel of the camera.

    Returns ``(rays, valid)`` where rays has shape (H, W, 2) holding the
    normalized (x, y) such that the pixel's viewing ray is (x, y, 1), and
    valid flags pixels whose undistortion converged. Results are cached per
    intrinsics and returned read-only.
    """
    if intr in _ray_cache:
        return _ray_cache[intr]
    vv, uu = np.mgrid[0:intr.height, 0:intr.width].astype(np.float64)
    pixels = np.stack([uu, vv], axis=-1)
    xy, ok = undistort_normalized(intr.normalize(pixels), intr.distortion)
    xy.flags.writeable = False
    ok.flags.writeable = False
    _ray_cache[intr] = (xy, ok)
    return xy, ok


# ---------------------------------------------------------------------------
# calibration target rendering


def render_target_view(intr: CameraIntrinsics, board_to_camera: RigidPose,
                       target: TargetSpec, spectrum: str, *,
                       noise_sigma: float = 0.0, rng=None) -> np.ndarray:
    """Render the hole grid as seen by one camera, as a float raster in [0, 1].

    The board plate fills the frame at its plate intensity; each hole becomes
    a soft-edged dark disk at the projected center of its circle. Additive
    Gaussian noise is applied when ``noise_sigma`` > 0 (``rng`` may be a seed
    or a Generator). Raises TargetBehindCamera when no hole center has z > 0.
    """
    plate, hole = target.contrast[spectrum]
    centers_cam = board_to_camera.apply(target.circle_centers())
    z = centers_cam[:, 2]
    if np.all(z <= 0):
        raise TargetBehindCamera("every hole center has z <= 0")

    in_front = z > 0
    px = project(centers_cam[in_front], intr)
    radii = target.radius_m * 0.5 * (intr.fx + intr.fy) / z[in_front]

    coverage = np.zeros((intr.height, intr.width))
    offsets = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    sub_u, sub_v = np.meshgrid(offsets, offsets)

    for (u0, v0), r_px in zip(px, radii):
        edge = EDGE_WIDTH_PX
        margin = edge / 2 + 1.0
        lo_u = max(int(np.floor(u0 - r_px - margin)), 0)
        hi_u = min(int(np.ceil(u0 + r_px + margin)) + 1, intr.width)
        lo_v = max(int(np.floor(v0 - r_px - margin)), 0)
        hi_v = min(int(np.ceil(v0 + r_px + margin)) + 1, intr.height)
        if lo_u >= hi_u or lo_v >= hi_v:
            continue
        uu = np.arange(lo_u, hi_u, dtype=np.float64)
        vv = np.arange(lo_v, hi_v, dtype=np.float64)
        du = uu[None, :, None, None] + sub_u[None, None] - u0
        dv = vv[:, None, None, None] + sub_v[None, None] - v0
        cov = _disk_coverage(np.sqrt(du * du + dv * dv), r_px, edge).mean(axis=(2, 3))
        patch = coverage[lo_v:hi_v, lo_u:hi_u]
        np.maximum(patch, cov, out=patch)

    raster = plate + coverage * (hole - plate)
    if noise_sigma > 0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        raster = raster + gen.normal(0.0, noise_sigma, raster.shape)
    return np.clip(raster, 0.0, 1.0)


def render_target_depth(intr: CameraIntrinsics,
                        board_to_camera: RigidPose) -> np.ndarray:
    """Depth (meters) of the board plane per pixel; 0 where there is no hit."""
    rays, ok = camera_rays(intr)
    dirs = np.concatenate([rays, np.ones(rays.shape[:2] + (1,))], axis=-1)
    normal = board_to_camera.rotation[:, 2]
    p0 = board_to_camera.translation
    denom = dirs @ normal
    num = float(normal @ p0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    depth = np.where(ok & np.isfinite(t) & (t > 0), t, 0.0)
    return depth


def render_target_frame(rig: RigConfig, target: TargetSpec,
                        board_to_rig: RigidPose, *, noise_sigma=None,
                        rng=None, timestamp: int = 0) -> MultispectralFrame:
    """Render one calibration view for every camera, quantized to raster dtypes.

    ``noise_sigma`` maps spectra to noise levels (missing keys mean none).
    The rgb target image is achromatic, stored on all three channels; depth
    comes from the board plane as seen by the rgb camera.
    """
    noise_sigma = noise_sigma or {}
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    rasters = {}
    for cam in ("rgb", "thermal", "uv"):
        pose = rig.poses[cam].inverse() @ board_to_rig
        rasters[cam] = render_target_view(
            rig.intrinsics[cam], pose, target, cam,
            noise_sigma=noise_sigma.get(cam, 0.0), rng=gen)
    depth_m = render_target_depth(rig.intrinsics["depth"],
                                  rig.poses["depth"].inverse() @ board_to_rig)
    gray = np.round(rasters["rgb"] * 255).astype(np.uint8)
    return MultispectralFrame(
        rgb=np.repeat(gray[:, :, None], 3, axis=2),
        thermal=np.round(rasters["thermal"] * 65535).astype(np.uint16),
        uv=np.round(rasters["uv"] * 255).astype(np.uint8),
        depth=np.round(np.clip(depth_m * 1000.0, 0, 65535)).astype(np.uint16),
        timestamp=timestamp)


# ---------------------------------------------------------------------------
# scene rendering


def _raycast(intr: CameraIntrinsics, camera_in_rig: RigidPose, planes):
    """Nearest plane hit per pixel.

    Returns (t, plane_index, local_x, local_y): ray parameter in meters
    (equal to camera-frame z since rays are (x, y, 1)), the winning plane's
    index or -1, and plane-local hit coordinates in meters.
    """
    rays, ok = camera_rays(intr)
    dirs = np.concatenate([rays, np.ones(rays.shape[:2] + (1,))], axis=-1)
    shape = rays.shape[:2]
    best_t = np.full(shape, np.inf)
    best_idx = np.full(shape, -1, dtype=np.int32)
    best_lx = np.zeros(shape)
    best_ly = np.zeros(shape)
    rig_to_cam = camera_in_rig.inverse()

    for idx, plane in enumerate(planes):
        local_to_cam = rig_to_cam @ plane.pose
        ex, ey, normal = local_to_cam.rotation.T
        p0 = local_to_cam.translation
        denom = dirs @ normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (normal @ p0) / denom
        hit = dirs * t[..., None] - p0
        lx = hit @ ex
        ly = hit @ ey
        inside = (ok & np.isfinite(t) & (t > 0)
                  & (lx >= 0) & (lx <= plane.width_m)
                  & (ly >= 0) & (ly <= plane.height_m)
                  & (t < best_t))
        best_t[inside] = t[inside]
        best_idx[inside] = idx
        best_lx[inside] = lx[inside]
        best_ly[inside] = ly[inside]
    return best_t, best_idx, best_lx, best_ly


def _paint_patches(raster, idx, lx, ly, patches):
    for patch in patches:
        inside = ((idx == patch.plane)
                  & (lx >= patch.x_m) & (lx <= patch.x_m + patch.width_m)
                  & (ly >= patch.y_m) & (ly <= patch.y_m + patch.height_m))
        raster[inside] = patch.value


def render_scene(rig: RigConfig, scene: SceneSpec, *, rng=None,
                 timestamp: int = 0) -> MultispectralFrame:
    """Ray-cast the scene into all four streams of the rig.

    Hidden uv patches alter only the uv raster and thermal patches only the
    thermal raster; the rgb raster depends on plane albedo alone. Depth is
    the rgb camera's nearest-hit z in millimeters (0 where nothing is hit).
    Raises EmptyScene when no camera sees any plane.
    """
    if not scene.planes:
        raise EmptyScene("scene declares no planes")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    hits = {cam: _raycast(rig.intrinsics[cam], rig.poses[cam], scene.planes)
            for cam in ("rgb", "thermal", "uv")}
    if all(np.all(hits[cam][1] < 0) for cam in hits):
        raise EmptyScene("no camera sees any scene plane")

    def with_noise(raster, spectrum):
        sigma = scene.noise_sigma.get(spectrum, 0.0)
        if sigma > 0:
            raster = raster + gen.normal(0.0, sigma, raster.shape)
        return np.clip(raster, 0.0, 1.0)

    t, idx, lx, ly = hits["rgb"]
    albedo = np.array([p.albedo_rgb for p in scene.planes])
    rgb = np.zeros(idx.shape + (3,))
    seen = idx >= 0
    rgb[seen] = albedo[idx[seen]]
    rgb = with_noise(rgb, "rgb")
    depth_mm = np.zeros(idx.shape, dtype=np.uint16)
    depth_mm[seen] = np.round(np.clip(t[seen] * 1000.0, 0, 65535)).astype(np.uint16)

    t_th, idx_th, lx_th, ly_th = hits["thermal"]
    thermal = np.zeros(idx_th.shape)
    seen_th = idx_th >= 0
    thermal[seen_th] = np.array(
        [p.thermal_value for p in scene.planes])[idx_th[seen_th]]
    _paint_patches(thermal, idx_th, lx_th, ly_th, scene.thermal_patches)
    thermal = with_noise(thermal, "thermal")

    t_uv, idx_uv, lx_uv, ly_uv = hits["uv"]
    uv = np.zeros(idx_uv.shape)
    seen_uv = idx_uv >= 0
    uv[seen_uv] = np.array([p.uv_value for p in scene.planes])[idx_uv[seen_uv]]
    _paint_patches(uv, idx_uv, lx_uv, ly_uv, scene.uv_patches)
    uv = with_noise(uv, "uv")

    return MultispectralFrame(
        rgb=np.round(rgb * 255).astype(np.uint8),
        thermal=np.round(thermal * 65535).astype(np.uint16),
        uv=np.round(uv * 255).astype(np.uint8),
        depth=depth_mm,
        timestamp=timestamp)


# ---------------------------------------------------------------------------
# analytic ground truth


def ground_truth_map(rig: RigConfig, pixels, depth_m, camera: str) -> np.ndarray:
    """Where an rgb pixel at a known metric depth lands in another camera.

    This is the analytic reference the estimated registration is checked
    against: undistort the rgb pixel, scale its ray by depth, move the point
    through the rig's true relative pose, and project with the destination
    camera's true intrinsics. ``pixels`` has shape (..., 2), ``depth_m``
    broadcasts against it. Raises NonPositiveDepth for depth <= 0 and for
    points that land behind the destination camera.
    """
    ideal = undistort_pixel(pixels, rig.intrinsics["rgb"])
    points = unproject(ideal, rig.intrinsics["rgb"], depth_m)
    moved = rig.relative_pose("rgb", camera).apply(points)
    return project(moved, rig.intrinsics[camera])


def patch_footprint(rig: RigConfig, scene: SceneSpec, spectrum: str,
                    index: int | None = None) -> np.ndarray:
    """Rgb-grid mask of where a hidden patch should surface after alignment.

    A pixel belongs to the footprint when the rgb camera's ray hits a patch
    rectangle and the hit point is visible to the patch's camera (in front
    of it and inside its image bounds, where resampling is defined). Built
    from the rig's ground truth only; the registration and fusion paths are
    not involved.
    """
    patches = scene.uv_patches if spectrum == "uv" else scene.thermal_patches
    if index is not None:
        patches = (patches[index],)
    t, idx, lx, ly = _raycast(rig.intrinsics["rgb"], rig.poses["rgb"], scene.planes)

    footprint = np.zeros(idx.shape, dtype=bool)
    for patch in patches:
        inside = ((idx == patch.plane)
                  & (lx >= patch.x_m) & (lx <= patch.x_m + patch.width_m)
                  & (ly >= patch.y_m) & (ly <= patch.y_m + patch.height_m))
        footprint |= inside

    rays, _ = camera_rays(rig.intrinsics["rgb"])
    dirs = np.concatenate([rays, np.ones(rays.shape[:2] + (1,))], axis=-1)
    pts = dirs * t[..., None]
    sel = footprint & np.isfinite(t)
    moved = rig.relative_pose("rgb", spectrum).apply(pts[sel])
    intr = rig.intrinsics[spectrum]
    visible = moved[:, 2] > 0
    px = np.full((moved.shape[0], 2), -1.0)
    px[visible] = project(moved[visible], intr)
    in_bounds = (visible & (px[:, 0] >= 0) & (px[:, 0] <= intr.width - 1)
                 & (px[:, 1] >= 0) & (px[:, 1] <= intr.height - 1))
    rows, cols = np.nonzero(sel)
    out = np.zeros_like(footprint)
    out[rows[in_bounds], cols[in_bounds]] = True
    return out
