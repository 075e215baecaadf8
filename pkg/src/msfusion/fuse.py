"""Fused visualization and the multispectral point cloud.

A fused image is the rgb raster with pixels recolored wherever an aligned
channel crosses its threshold: hot pixels take a warm ramp (dark red into
yellow), uv-bright pixels a cool ramp (deep blue into violet), and
everything below threshold, plus every bad point, keeps its camera color
untouched. Thresholds are absolute intensities or scene-adaptive
percentiles over the valid pixels. The point cloud lifts each valid-depth
pixel into the rgb camera frame and carries the fused color next to the
raw thermal and uv intensities, so no spectrum is lost by the recoloring.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import AllBadPoints, DimensionMismatch
from .geometry import CameraIntrinsics, undistort_pixel, unproject
from .register import AlignedFrame

__all__ = [
    "FusedFrame",
    "FusionConfig",
    "MultispectralPointCloud",
    "SpectralFuser",
    "build_point_cloud",
    "fuse_frame",
    "highlight",
    "laplacian_sharpen",
    "resolve_threshold",
]

LAPLACIAN_KERNEL = np.array([[0, -1, 0],
                             [-1, 4, -1],
                             [0, -1, 0]], dtype=np.float64)

# ramp endpoints, low intensity first
WARM_RAMP = ((128, 0, 0), (255, 255, 0))
COOL_RAMP = ((0, 0, 128), (200, 0, 255))


@dataclass(frozen=True)
class FusionConfig:
    """Thresholds, ramps, and conflict handling for the fused image.

    Thresholds are either numbers (absolute, channel units) or percentile
    strings like ``"p95"`` evaluated over valid pixels. ``precedence``
    picks the winner when a pixel crosses both thresholds. Ramps span the
    stated intensity range of each channel; ``sharpen_uv_alpha`` > 0 runs
    the Laplacian sharpening pass on the aligned uv raster first.
    """

    v_thres_thermal: object = "p95"
    v_thres_uv: object = "p95"
    precedence: str = "thermal_over_uv"
    thermal_ramp: tuple = WARM_RAMP
    uv_ramp: tuple = COOL_RAMP
    thermal_range: tuple = (0.0, 65535.0)
    uv_range: tuple = (0.0, 255.0)
    sharpen_uv_alpha: float = 0.0

    def __post_init__(self):
        if self.precedence not in ("thermal_over_uv", "uv_over_thermal"):
            raise ValueError(f"unknown precedence {self.precedence!r}")
        for name, rng in (("thermal_range", self.thermal_range),
                          ("uv_range", self.uv_range)):
            if not rng[1] > rng[0]:
                raise ValueError(f"{name} must be increasing")
        for spec in (self.v_thres_thermal, self.v_thres_uv):
            if isinstance(spec, str):
                _parse_percentile(spec)
            elif not np.isfinite(spec):
                raise ValueError("absolute thresholds must be finite")

    def to_dict(self) -> dict:
        return {"v_thres_thermal": self.v_thres_thermal,
                "v_thres_uv": self.v_thres_uv,
                "precedence": self.precedence,
                "thermal_ramp": [list(c) for c in self.thermal_ramp],
                "uv_ramp": [list(c) for c in self.uv_ramp],
                "thermal_range": list(self.thermal_range),
                "uv_range": list(self.uv_range),
                "sharpen_uv_alpha": self.sharpen_uv_alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        kwargs = dict(d)
        for key in ("thermal_ramp", "uv_ramp"):
            if key in kwargs:
                kwargs[key] = tuple(tuple(c) for c in kwargs[key])
        for key in ("thermal_range", "uv_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class MultispectralPointCloud:
    """Per-point position, display color, raw intensities, and origin pixel."""

    points: np.ndarray
    colors: np.ndarray
    thermal: np.ndarray
    uv: np.ndarray
    source_pixels: np.ndarray

    def __post_init__(self):
        n = len(self.points)
        for name, arr in (("colors", self.colors), ("thermal", self.thermal),
                          ("uv", self.uv),
                          ("source_pixels", self.source_pixels)):
            if len(arr) != n:
                raise DimensionMismatch(f"{name} disagrees on point count")
        if n and (not np.all(np.isfinite(self.points))
                  or np.any(self.points[:, 2] <= 0)):
            raise ValueError("points must be finite with z > 0")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class FusedFrame:
    """Output of one fusion pass: recolored rgb plus the point cloud."""

    rgb: np.ndarray
    cloud: MultispectralPointCloud = None
    thermal_threshold: float = 0.0
    uv_threshold: float = 0.0


def laplacian_sharpen(image, alpha: float = 1.0, limits=None) -> np.ndarray:
    """High-pass sharpening: out = in + alpha * (in convolved with L).

    L is the 4-neighbor Laplacian; the border replicates edge pixels.
    Integer rasters are clamped to their dtype range and returned in it;
    floats come back unclamped unless explicit ``limits`` are given.
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise DimensionMismatch("sharpening expects a single-channel raster")
    work = img.astype(np.float64)
    out = work + alpha * ndimage.convolve(work, LAPLACIAN_KERNEL,
                                          mode="nearest")
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        lo, hi = limits if limits is not None else (info.min, info.max)
        return np.clip(np.rint(out), lo, hi).astype(img.dtype)
    if limits is not None:
        out = np.clip(out, *limits)
    return out


def _parse_percentile(spec: str) -> float:
    text = spec.strip().lower()
    if not text.startswith("p"):
        raise ValueError(f"threshold spec {spec!r} is neither a number nor "
                         f"a percentile like 'p95'")
    try:
        p = float(text[1:])
    except ValueError:
        raise ValueError(f"bad percentile spec {spec!r}") from None
    if not 0.0 < p <= 100.0:
        raise ValueError("percentile must be in (0, 100]")
    return p


def resolve_threshold(raster, spec, valid=None) -> float:
    """Turn a threshold spec into an intensity value for this raster.

    Numbers pass through. A percentile string selects by nearest rank
    (1-based rank ceil(p/100 * n)) over the valid pixels, so ``"p100"``
    is the maximum. Raises AllBadPoints when a percentile has no valid
    pixel to rank.
    """
    if not isinstance(spec, str):
        return float(spec)
    p = _parse_percentile(spec)
    values = np.asarray(raster, dtype=np.float64)
    if valid is not None:
        values = values[np.asarray(valid, dtype=bool)]
    values = values.ravel()
    if values.size == 0:
        raise AllBadPoints("no valid pixels to take a percentile over")
    rank = max(int(np.ceil(p / 100.0 * values.size)), 1)
    return float(np.sort(values)[rank - 1])


def _ramp_colors(values, lo, hi, ramp) -> np.ndarray:
    t = np.clip((np.asarray(values, dtype=np.float64) - lo) / (hi - lo),
                0.0, 1.0)[..., None]
    start = np.asarray(ramp[0], dtype=np.float64)
    end = np.asarray(ramp[1], dtype=np.float64)
    return np.rint(start * (1.0 - t) + end * t).astype(np.uint8)


def highlight(rgb, thermal_aligned, uv_aligned, mask,
              cfg: FusionConfig = None) -> np.ndarray:
    """Recolor rgb pixels whose aligned channels cross their thresholds.

    A pixel strictly above a threshold takes that channel's ramp color at
    its own intensity; ties and everything below stay rgb, as do all bad
    points regardless of intensity. When both channels cross,
    ``cfg.precedence`` decides. The input rgb raster is never modified.
    """
    cfg = cfg if cfg is not None else FusionConfig()
    rgb = np.asarray(rgb)
    thermal = np.asarray(thermal_aligned, dtype=np.float64)
    uv = np.asarray(uv_aligned, dtype=np.float64)
    bad = np.asarray(mask, dtype=bool)
    shape = rgb.shape[:2]
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionMismatch("rgb raster must be h x w x 3")
    for name, arr in (("thermal", thermal), ("uv", uv), ("mask", bad)):
        if arr.shape != shape:
            raise DimensionMismatch(
                f"{name} raster is {arr.shape}, rgb grid is {shape}")

    ok = ~bad
    thr_t = resolve_threshold(thermal, cfg.v_thres_thermal, ok)
    thr_u = resolve_threshold(uv, cfg.v_thres_uv, ok)
    hot = ok & (thermal > thr_t)
    bright = ok & (uv > thr_u)

    out = rgb.copy()
    layers = [("uv", bright), ("thermal", hot)]
    if cfg.precedence == "uv_over_thermal":
        layers.reverse()
    for channel, sel in layers:
        if not np.any(sel):
            continue
        if channel == "thermal":
            out[sel] = _ramp_colors(thermal[sel], *cfg.thermal_range,
                                    cfg.thermal_ramp)
        else:
            out[sel] = _ramp_colors(uv[sel], *cfg.uv_range, cfg.uv_ramp)
    return out


def build_point_cloud(depth, fused_rgb, thermal_aligned, uv_aligned,
                      intr_rgb: CameraIntrinsics) -> MultispectralPointCloud:
    """Lift every valid-depth pixel into a point in the rgb camera frame.

    ``depth`` is millimeters on the rgb grid, non-positive meaning
    invalid. Points come out in row-major pixel order: undistorted ray
    scaled by metric depth. Colors are taken from the (typically fused)
    rgb raster; thermal and uv intensities are rounded to 16-bit counts.
    An all-invalid raster yields an empty cloud.
    """
    d = np.asarray(depth, dtype=np.float64)
    if d.shape != fused_rgb.shape[:2]:
        raise DimensionMismatch("depth and rgb rasters disagree")
    valid = np.isfinite(d) & (d > 0)
    vv, uu = np.nonzero(valid)
    if vv.size == 0:
        return MultispectralPointCloud(
            points=np.empty((0, 3)), colors=np.empty((0, 3), dtype=np.uint8),
            thermal=np.empty(0, dtype=np.uint16),
            uv=np.empty(0, dtype=np.uint16),
            source_pixels=np.empty((0, 2), dtype=np.int32))

    pixels = np.stack([uu, vv], axis=-1).astype(np.float64)
    ideal = undistort_pixel(pixels, intr_rgb)
    points = unproject(ideal, intr_rgb, d[valid] * 1e-3)
    thermal = np.clip(np.rint(np.asarray(thermal_aligned)[valid]),
                      0, 65535).astype(np.uint16)
    uv = np.clip(np.rint(np.asarray(uv_aligned)[valid]),
                 0, 65535).astype(np.uint16)
    return MultispectralPointCloud(
        points=points, colors=np.asarray(fused_rgb)[valid].astype(np.uint8),
        thermal=thermal, uv=uv,
        source_pixels=np.stack([uu, vv], axis=-1).astype(np.int32))


def fuse_frame(aligned: AlignedFrame, cfg: FusionConfig = None,
               intr_rgb: CameraIntrinsics = None) -> FusedFrame:
    """Run the full fusion pass on one aligned frame.

    Sharpens uv if configured, recolors via ``highlight``, and builds the
    point cloud when rgb intrinsics (and the frame's depth) are at hand;
    otherwise the cloud is None and only the image comes back.
    """
    cfg = cfg if cfg is not None else FusionConfig()
    uv = aligned.uv
    if cfg.sharpen_uv_alpha > 0:
        uv = laplacian_sharpen(uv, cfg.sharpen_uv_alpha, limits=cfg.uv_range)
    ok = ~aligned.bad_mask
    thr_t = resolve_threshold(aligned.thermal, cfg.v_thres_thermal, ok)
    thr_u = resolve_threshold(uv, cfg.v_thres_uv, ok)
    pinned = FusionConfig(**{**cfg.to_dict(),
                             "v_thres_thermal": thr_t, "v_thres_uv": thr_u})
    fused = highlight(aligned.rgb, aligned.thermal, uv, aligned.bad_mask,
                      pinned)
    cloud = None
    if intr_rgb is not None and aligned.depth_mm is not None:
        cloud = build_point_cloud(aligned.depth_mm, fused, aligned.thermal,
                                  uv, intr_rgb)
    return FusedFrame(rgb=fused, cloud=cloud, thermal_threshold=thr_t,
                      uv_threshold=thr_u)


class SpectralFuser(BaseEstimator, TransformerMixin):
    """Transformer from aligned frames to fused frames.

    ``config`` defaults to percentile thresholds with warm-over-cool
    precedence; ``intrinsics`` (the rgb camera) enables point-cloud
    output. Like the aligner, ``fit`` validates and ``transform`` does
    the work frame by frame.
    """

    def __init__(self, config=None, intrinsics=None):
        self.config = config
        self.intrinsics = intrinsics

    def fit(self, X=None, y=None):
        self.config_ = self.config if self.config is not None else FusionConfig()
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        if isinstance(X, AlignedFrame):
            return fuse_frame(X, self.config_, self.intrinsics)
        return [fuse_frame(frame, self.config_, self.intrinsics)
                for frame in X]
