"""Depth-driven alignment of the secondary cameras onto the rgb grid.

Every rgb pixel with measured depth is lifted onto its viewing ray, moved
through the rig geometry into a secondary camera, and projected there with
that camera's full lens model. The secondary image is then gathered
bilinearly at the landing coordinates, leaving thermal and uv intensities
in one-to-one correspondence with rgb pixels. Pixels never become errors
on this path: missing depth, a landing point behind the secondary camera,
or a landing point outside its frame all mark the pixel bad, it samples as
zero, and the mask records why downstream stages must leave it alone.

The mapping is a forward projection with a bilinear gather and no
occlusion reasoning; with cameras mounted centimeters apart the parallax
gaps are a fraction of a pixel at room-scale depths. ``harmonize_resolution``
exists for display paths that want every raster at one size; the alignment
itself always samples the secondary image at native resolution.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_raster_matches
from .errors import DimensionMismatch
from .geometry import (
    CameraIntrinsics,
    RigidPose,
    distort_normalized,
    undistort_normalized,
)
from .rig import MultispectralFrame

__all__ = [
    "AlignedFrame",
    "FrameAligner",
    "PixelMapping",
    "align_frame",
    "alignment_inputs",
    "build_mapping",
    "harmonize_resolution",
    "sample_secondary",
]


@dataclass(frozen=True)
class PixelMapping:
    """Where each rgb pixel lands in one secondary image.

    ``coords`` holds sub-pixel landing coordinates (h, w, 2) and
    ``world_points`` the rgb-camera-frame points (h, w, 3) that produced
    them; both are NaN wherever ``valid`` is False. Valid coordinates
    always lie inside the bilinear-interpolable domain of the secondary
    image, [0, width-1] x [0, height-1].
    """

    coords: np.ndarray
    world_points: np.ndarray
    valid: np.ndarray
    secondary_width: int
    secondary_height: int

    def __post_init__(self):
        if (self.coords.shape[:2] != self.valid.shape
                or self.world_points.shape[:2] != self.valid.shape):
            raise DimensionMismatch("mapping arrays disagree on raster shape")

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))


@dataclass(frozen=True)
class AlignedFrame:
    """One capture with every raster expressed on the rgb pixel grid.

    ``thermal`` and ``uv`` hold resampled intensities in their native units
    as floats (bilinear weights make them fractional); positions flagged in
    ``bad_mask`` sampled nothing and hold zero. ``depth_mm`` rides along
    unchanged so later stages can lift pixels back into 3d.
    """

    rgb: np.ndarray
    thermal: np.ndarray
    uv: np.ndarray
    bad_mask: np.ndarray
    depth_mm: np.ndarray = None

    def __post_init__(self):
        shape = self.rgb.shape[:2]
        for name, arr in (("thermal", self.thermal), ("uv", self.uv),
                          ("bad_mask", self.bad_mask)):
            if arr.shape != shape:
                raise DimensionMismatch(
                    f"{name} raster is {arr.shape}, rgb grid is {shape}")
        if self.depth_mm is not None and self.depth_mm.shape != shape:
            raise DimensionMismatch("depth raster does not match the rgb grid")


def harmonize_resolution(image, target_w: int, target_h: int) -> np.ndarray:
    """Resize a raster to ``target_w`` x ``target_h`` for display paths.

    Downsampling low-pass filters first (gaussian, sigma of half the
    shrink ratio per axis) so detail beyond the new Nyquist limit cannot
    alias; upsampling interpolates directly. Resampling is bilinear with
    aligned pixel centers. Integer rasters come back in their own dtype,
    floats stay float. An identity resize is a plain copy.
    """
    img = np.asarray(image)
    if img.ndim not in (2, 3):
        raise DimensionMismatch("expected a 2-dim or 2-dim+channels raster")
    if target_w <= 0 or target_h <= 0:
        raise ValueError("target dimensions must be positive")
    src_h, src_w = img.shape[:2]
    if (src_w, src_h) == (target_w, target_h):
        return img.copy()

    ry = src_h / target_h
    rx = src_w / target_w
    work = img.astype(np.float64)
    sigma = (0.5 * ry if ry > 1 else 0.0, 0.5 * rx if rx > 1 else 0.0)
    if any(s > 0 for s in sigma):
        if work.ndim == 3:
            work = ndimage.gaussian_filter(work, sigma=(*sigma, 0.0))
        else:
            work = ndimage.gaussian_filter(work, sigma=sigma)

    yy = (np.arange(target_h, dtype=np.float64) + 0.5) * ry - 0.5
    xx = (np.arange(target_w, dtype=np.float64) + 0.5) * rx - 0.5
    gy, gx = np.meshgrid(yy, xx, indexing="ij")
    if work.ndim == 3:
        out = np.stack([ndimage.map_coordinates(work[..., c], [gy, gx],
                                                order=1, mode="nearest")
                        for c in range(work.shape[2])], axis=-1)
    else:
        out = ndimage.map_coordinates(work, [gy, gx], order=1, mode="nearest")

    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        return np.clip(np.rint(out), info.min, info.max).astype(img.dtype)
    return out.astype(img.dtype)


def build_mapping(depth, intr_rgb: CameraIntrinsics, intr_sec: CameraIntrinsics,
                  rel) -> PixelMapping:
    """Map every rgb pixel through metric depth into a secondary camera.

    ``depth`` is the rgb-registered raster in millimeters with 0 (or any
    non-positive value) meaning no measurement. ``rel`` is the rgb-to-
    secondary rigid transform, given directly or as an averaged-extrinsics
    record carrying one. Per pixel: undistort, scale the ray by depth,
    move into the secondary camera, project with its distortion. Pixels
    whose chain fails anywhere (no depth, behind the secondary camera,
    landing outside its frame) come back invalid instead of raising.
    """
    pose: RigidPose = rel.pose if hasattr(rel, "pose") else rel
    d = check_raster_matches(np.asarray(depth), "depth",
                             intr_rgb.width, intr_rgb.height)
    h, w = d.shape
    dval = d.astype(np.float64)
    valid = np.isfinite(dval) & (dval > 0)
    z = np.where(valid, dval * 1e-3, 1.0)

    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    pixels = np.stack([uu, vv], axis=-1)
    xy, ok = undistort_normalized(intr_rgb.normalize(pixels),
                                  intr_rgb.distortion)
    valid &= ok

    points = np.concatenate([xy * z[..., None], z[..., None]], axis=-1)
    moved = pose.apply(points)
    z_sec = moved[..., 2]
    valid &= z_sec > 0
    z_safe = np.where(z_sec > 0, z_sec, 1.0)
    landed = intr_sec.denormalize(
        distort_normalized(moved[..., :2] / z_safe[..., None],
                           intr_sec.distortion))
    valid &= ((landed[..., 0] >= 0) & (landed[..., 0] <= intr_sec.width - 1)
              & (landed[..., 1] >= 0) & (landed[..., 1] <= intr_sec.height - 1))

    coords = np.where(valid[..., None], landed, np.nan)
    world = np.where(valid[..., None], points, np.nan)
    return PixelMapping(coords=coords, world_points=world, valid=valid,
                        secondary_width=intr_sec.width,
                        secondary_height=intr_sec.height)


def sample_secondary(secondary, mapping: PixelMapping) -> np.ndarray:
    """Gather a secondary raster at the mapped coordinates, rgb-shaped.

    Bilinear interpolation at each valid landing point; invalid positions
    stay zero. The result is float64 in the secondary image's native
    units.
    """
    sec = np.asarray(secondary)
    if sec.ndim != 2:
        raise DimensionMismatch("secondary raster must be single-channel")
    if sec.shape != (mapping.secondary_height, mapping.secondary_width):
        raise DimensionMismatch(
            f"secondary raster is {sec.shape[1]}x{sec.shape[0]}, mapping was "
            f"built for {mapping.secondary_width}x{mapping.secondary_height}")
    if sec.shape[0] < 2 or sec.shape[1] < 2:
        raise DimensionMismatch("secondary raster too small to interpolate")

    out = np.zeros(mapping.valid.shape, dtype=np.float64)
    idx = mapping.valid
    if not np.any(idx):
        return out
    x = mapping.coords[..., 0][idx]
    y = mapping.coords[..., 1][idx]
    x0 = np.clip(np.floor(x).astype(np.intp), 0, sec.shape[1] - 2)
    y0 = np.clip(np.floor(y).astype(np.intp), 0, sec.shape[0] - 2)
    fx = x - x0
    fy = y - y0
    grid = sec.astype(np.float64)
    out[idx] = (grid[y0, x0] * (1 - fx) * (1 - fy)
                + grid[y0, x0 + 1] * fx * (1 - fy)
                + grid[y0 + 1, x0] * (1 - fx) * fy
                + grid[y0 + 1, x0 + 1] * fx * fy)
    return out


def alignment_inputs(source, cameras=("thermal", "uv")):
    """Pull per-camera intrinsics and rgb-relative poses for alignment.

    Accepts either a rig description (ground truth) or a calibration
    result (estimated); returns the ``(intrinsics, relative)`` dict pair
    that ``align_frame`` and ``FrameAligner`` take.
    """
    if hasattr(source, "cameras"):
        intrinsics = {c: source.cameras[c].intrinsics
                      for c in ("rgb", *cameras)}
    else:
        intrinsics = {c: source.intrinsics[c] for c in ("rgb", *cameras)}
    relative = {c: source.relative_pose("rgb", c) for c in cameras}
    return intrinsics, relative


def align_frame(frame: MultispectralFrame, intrinsics: dict,
                relative: dict) -> AlignedFrame:
    """Resample a captured frame's thermal and uv rasters onto the rgb grid.

    ``intrinsics`` maps camera names (rgb plus each secondary) to their
    models; ``relative`` maps each secondary name to its rgb-to-camera
    pose. The bad-point mask is the union over secondaries: a pixel that
    cannot be resolved in every channel is excluded from fusion entirely.
    """
    samples = {}
    masks = []
    for cam, source in (("thermal", frame.thermal), ("uv", frame.uv)):
        mapping = build_mapping(frame.depth, intrinsics["rgb"],
                                intrinsics[cam], relative[cam])
        samples[cam] = sample_secondary(source, mapping)
        masks.append(mapping.valid)
    return AlignedFrame(rgb=frame.rgb.copy(), thermal=samples["thermal"],
                        uv=samples["uv"], bad_mask=~(masks[0] & masks[1]),
                        depth_mm=frame.depth.copy())


class FrameAligner(BaseEstimator, TransformerMixin):
    """Transformer that aligns captured frames with a fixed calibration.

    Parameters are the same dicts ``align_frame`` takes, typically built
    by ``alignment_inputs``. ``fit`` only validates them (there is nothing
    to estimate; the calibration is the model), ``transform`` maps frames
    to aligned frames.
    """

    def __init__(self, intrinsics=None, relative=None):
        self.intrinsics = intrinsics
        self.relative = relative

    def fit(self, X=None, y=None):
        if not self.intrinsics or "rgb" not in self.intrinsics:
            raise ValueError("intrinsics must include the rgb camera")
        if not self.relative:
            raise ValueError("relative poses for the secondary cameras "
                             "are required")
        missing = [c for c in self.relative if c not in self.intrinsics]
        if missing:
            raise ValueError(f"no intrinsics for camera(s): {missing}")
        self.cameras_ = tuple(sorted(self.relative))
        return self

    def transform(self, X):
        check_is_fitted(self, "cameras_")
        if isinstance(X, MultispectralFrame):
            return align_frame(X, self.intrinsics, self.relative)
        return [align_frame(frame, self.intrinsics, self.relative)
                for frame in X]
