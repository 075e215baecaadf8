"""Rig, target, and scene descriptions for the synthetic camera stack.

The synthetic rig mirrors the physical unit: an RGB camera with a registered
depth stream, a low-resolution thermal camera, and a UV camera, all rigidly
mounted within a few centimeters of each other. Camera poses map camera-frame
points into a shared rig frame; the RGB camera sits at the rig origin in the
default configuration, so the rig frame doubles as the RGB camera frame.

Frames and conventions:

* Calibration target: a bright plate with ``rows x cols`` dark circular
  holes. Object coordinates are corner-origin, (col * pitch, row * pitch, 0),
  row-major, matching the ordering produced by the detector.
* Scene planes: plane-local coordinates are corner-origin with x along the
  plane's first axis, y along the second, z the normal; ``pose`` maps
  plane-local points into the rig frame.
* Hidden patches: axis-aligned rectangles in plane-local meters, visible in
  exactly one spectrum (uv or thermal), invisible in RGB by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, DistortionCoefficients, RigidPose, rodrigues

SPECTRA = ("rgb", "thermal", "uv")
CAMERA_IDS = ("rgb", "thermal", "uv", "depth")


def _pose_to_dict(pose: RigidPose) -> dict:
    return {"rotation": pose.rotation.tolist(),
            "translation_m": pose.translation.tolist()}


def _pose_from_dict(d: dict) -> RigidPose:
    return RigidPose(np.asarray(d["rotation"], dtype=np.float64),
                     np.asarray(d["translation_m"], dtype=np.float64))


# ---------------------------------------------------------------------------
# calibration target


@dataclass(frozen=True)
class TargetSpec:
    """Planar calibration plate with a grid of dark circular holes.

    ``contrast`` maps each spectrum to (plate, hole) intensities in [0, 1];
    the plate must be brighter than the holes in every spectrum.
    """

    rows: int = 5
    cols: int = 7
    pitch_m: float = 0.03
    radius_m: float = 0.009
    contrast: dict = field(default_factory=lambda: {
        "rgb": (0.92, 0.08),
        "thermal": (0.88, 0.12),
        "uv": (0.85, 0.10),
    })

    def __post_init__(self):
        if self.rows < 3 or self.cols < 3:
            raise ValueError(f"grid must be at least 3x3, got {self.rows}x{self.cols}")
        if not (0 < self.radius_m < self.pitch_m / 2):
            raise ValueError(
                f"radius {self.radius_m} must be in (0, pitch/2={self.pitch_m / 2})")
        for spectrum in SPECTRA:
            plate, hole = self.contrast[spectrum]
            if not plate > hole:
                raise ValueError(f"{spectrum}: plate {plate} must exceed hole {hole}")

    def circle_centers(self) -> np.ndarray:
        """Hole centers (rows*cols, 3) in board coordinates, row-major."""
        rr, cc = np.mgrid[0:self.rows, 0:self.cols]
        return np.column_stack([
            cc.ravel() * self.pitch_m,
            rr.ravel() * self.pitch_m,
            np.zeros(self.rows * self.cols),
        ])

    def center_of_board(self) -> np.ndarray:
        return np.array([(self.cols - 1) * self.pitch_m / 2,
                         (self.rows - 1) * self.pitch_m / 2, 0.0])

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "pitch_m": self.pitch_m,
                "radius_m": self.radius_m,
                "contrast": {k: list(v) for k, v in self.contrast.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetSpec":
        kwargs = {}
        for key in ("rows", "cols", "pitch_m", "radius_m"):
            if key in d:
                kwargs[key] = d[key]
        if "contrast" in d:
            kwargs["contrast"] = {k: tuple(v) for k, v in d["contrast"].items()}
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# camera rig


@dataclass(frozen=True)
class RigConfig:
    """Intrinsics and rig-frame poses for the four camera streams.

    ``poses[cam]`` maps camera-frame points into the rig frame. The depth
    stream is registered to the RGB camera and must share its intrinsics
    and pose.
    """

    intrinsics: dict
    poses: dict

    def __post_init__(self):
        for cam in CAMERA_IDS:
            if cam not in self.intrinsics or cam not in self.poses:
                raise ValueError(f"rig is missing camera {cam!r}")
        same_intr = self.intrinsics["depth"] == self.intrinsics["rgb"]
        same_pose = (np.array_equal(self.poses["depth"].rotation,
                                    self.poses["rgb"].rotation)
                     and np.array_equal(self.poses["depth"].translation,
                                        self.poses["rgb"].translation))
        if not (same_intr and same_pose):
            raise ValueError("depth stream must share RGB intrinsics and pose")

    def relative_pose(self, source: str, dest: str) -> RigidPose:
        """Rigid transform taking source-camera points to dest-camera points."""
        return self.poses[dest].inverse() @ self.poses[source]

    def to_dict(self) -> dict:
        out = {}
        for cam in CAMERA_IDS:
            if cam == "depth":
                continue  # implied by rgb
            intr = self.intrinsics[cam]
            out[cam] = {
                "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                "width": intr.width, "height": intr.height, "skew": intr.skew,
                "distortion": {
                    "k1": intr.distortion.k1, "k2": intr.distortion.k2,
                    "p1": intr.distortion.p1, "p2": intr.distortion.p2,
                    "k3": intr.distortion.k3,
                },
                "pose": _pose_to_dict(self.poses[cam]),
            }
        return {"cameras": out}

    @classmethod
    def from_dict(cls, d: dict) -> "RigConfig":
        intrinsics, poses = {}, {}
        for cam, c in d["cameras"].items():
            dist = DistortionCoefficients(**c.get("distortion", {}))
            intrinsics[cam] = CameraIntrinsics(
                fx=float(c["fx"]), fy=float(c["fy"]),
                cx=float(c["cx"]), cy=float(c["cy"]),
                width=int(c["width"]), height=int(c["height"]),
                skew=float(c.get("skew", 0.0)), distortion=dist)
            poses[cam] = _pose_from_dict(c["pose"]) if "pose" in c else RigidPose.identity()
        if "depth" not in intrinsics:
            intrinsics["depth"] = intrinsics["rgb"]
            poses["depth"] = poses["rgb"]
        return cls(intrinsics=intrinsics, poses=poses)


def _focal_from_hfov(width: int, hfov_deg: float) -> float:
    return (width / 2) / math.tan(math.radians(hfov_deg) / 2)


def default_rig() -> RigConfig:
    """The synthetic stand-in for the physical unit.

    RGB/depth 640x480 with a 74 degree horizontal field of view, thermal
    160x120 at 57 degrees, UV 640x480 at 55 degrees. UV and thermal sit
    3 cm to either side of the RGB camera with rotations under 2 degrees.
    Distortion coefficients are mild but nonzero so the calibration path
    actually has something to estimate.
    """
    f_rgb = _focal_from_hfov(640, 74.0)
    f_th = _focal_from_hfov(160, 57.0)
    f_uv = _focal_from_hfov(640, 55.0)

    intr_rgb = CameraIntrinsics(
        f_rgb, f_rgb, 320.0, 240.0, 640, 480,
        distortion=DistortionCoefficients(k1=-0.06, k2=0.012, p1=4e-4, p2=-3e-4))
    intr_th = CameraIntrinsics(
        f_th, f_th, 80.0, 60.0, 160, 120,
        distortion=DistortionCoefficients(k1=-0.18, k2=0.03, p1=2e-4, p2=1e-4))
    intr_uv = CameraIntrinsics(
        f_uv, f_uv, 320.0, 240.0, 640, 480,
        distortion=DistortionCoefficients(k1=-0.04, k2=0.008, p1=-2e-4, p2=3e-4))

    pose_rgb = RigidPose.identity()
    pose_th = RigidPose.from_axis_angle(
        np.radians([0.5, -0.8, 0.0]), [-0.03, -0.003, 0.001])
    pose_uv = RigidPose.from_axis_angle(
        np.radians([0.3, 1.2, 0.2]), [0.03, 0.002, 0.0])

    return RigConfig(
        intrinsics={"rgb": intr_rgb, "thermal": intr_th, "uv": intr_uv,
                    "depth": intr_rgb},
        poses={"rgb": pose_rgb, "thermal": pose_th, "uv": pose_uv,
               "depth": pose_rgb})


# ---------------------------------------------------------------------------
# target view poses


def target_view_pose(target: TargetSpec, distance_m: float,
                     tilt_x_deg: float = 0.0, tilt_y_deg: float = 0.0,
                     roll_deg: float = 0.0, offset_m=(0.0, 0.0)) -> RigidPose:
    """Board-to-rig pose placing the board center in front of the rig origin.

    The board is tilted about its own center (x tilt, then y, then in-plane
    roll) and the center lands at (offset_x, offset_y, distance) in the rig
    frame, so every camera of a compact rig keeps the full target in view.
    """
    rx, ry, rz = (math.radians(a) for a in (tilt_x_deg, tilt_y_deg, roll_deg))
    R = rodrigues([rx, 0, 0]) @ rodrigues([0, ry, 0]) @ rodrigues([0, 0, rz])
    center = target.center_of_board()
    t = np.array([offset_m[0], offset_m[1], distance_m]) - R @ center
    return RigidPose(R, t)


# The tilt quartet at 0.4 m conditions the closed-form intrinsics; tilts
# stay at or below 20 degrees because beyond that the projected hole
# spacing approaches the blob diameter and neighbors merge. The close and
# offset views exist for distortion coverage: the radial polynomial is only
# trustworthy out to the largest radius with data under it, and the
# registration stage evaluates it near the frame corners. Offsets are tuned
# to the largest values that keep every hole disk a few pixels inside all
# three frames (the side cameras bound them; their own baselines then carry
# the close views deep into their outer columns). The rolled pair turns the
# board's long axis vertical, which is the only way the 7-hole span covers
# the short image dimension.
DEFAULT_VIEW_PARAMS = (
    dict(distance_m=0.40),
    dict(distance_m=0.40, tilt_x_deg=20),
    dict(distance_m=0.40, tilt_x_deg=-20),
    dict(distance_m=0.40, tilt_y_deg=18),
    dict(distance_m=0.40, tilt_y_deg=-20),
    dict(distance_m=0.30, roll_deg=90, tilt_y_deg=8, offset_m=(0.0, 0.006)),
    dict(distance_m=0.30, roll_deg=90, tilt_y_deg=-8, offset_m=(0.0, -0.011)),
    dict(distance_m=0.28, offset_m=(0.012, 0.0)),
    dict(distance_m=0.28, offset_m=(-0.007, 0.0)),
    dict(distance_m=0.32, tilt_x_deg=12, tilt_y_deg=-12, roll_deg=-8,
         offset_m=(0.028, -0.037)),
    dict(distance_m=0.32, tilt_x_deg=-12, tilt_y_deg=12, roll_deg=8,
         offset_m=(-0.019, 0.026)),
    dict(distance_m=0.32, tilt_x_deg=-12, tilt_y_deg=-10, roll_deg=-10,
         offset_m=(-0.015, -0.020)),
)

# Board placements only the wide rgb camera keeps in frame. Depth-driven
# registration undistorts rgb pixels out to a normalized radius near 0.8
# (rays that land in the side cameras' corners), but a board visible to
# all three cameras at once never carries blobs past roughly 0.5, so the
# rgb distortion tail would be pure extrapolation. These four sweeps put
# centroids out where that tail is actually used; render them for rgb
# alone and let the other cameras sit the views out.
WIDE_FIELD_VIEW_PARAMS = (
    dict(distance_m=0.35, tilt_y_deg=-15, offset_m=(0.17, 0.11)),
    dict(distance_m=0.35, tilt_y_deg=15, offset_m=(-0.17, 0.11)),
    dict(distance_m=0.35, tilt_y_deg=-15, offset_m=(0.17, -0.11)),
    dict(distance_m=0.35, tilt_y_deg=15, offset_m=(-0.17, -0.11)),
)


def _views_from_params(target, params, count, limit_msg):
    if count is not None and count > len(params):
        raise ValueError(limit_msg)
    chosen = params if count is None else params[:count]
    return [target_view_pose(target, **p) for p in chosen]


def default_target_views(target: TargetSpec | None = None,
                         count: int | None = None) -> list:
    """Deterministic board-to-rig poses covering tilt, roll, and distance."""
    target = target or TargetSpec()
    return _views_from_params(
        target, DEFAULT_VIEW_PARAMS, count,
        f"only {len(DEFAULT_VIEW_PARAMS)} default views defined")


def wide_field_views(target: TargetSpec | None = None,
                     count: int | None = None) -> list:
    """Off-axis poses that pin the rgb distortion near its frame edges."""
    target = target or TargetSpec()
    return _views_from_params(
        target, WIDE_FIELD_VIEW_PARAMS, count,
        f"only {len(WIDE_FIELD_VIEW_PARAMS)} wide-field views defined")


# ---------------------------------------------------------------------------
# scene description


@dataclass(frozen=True)
class PlaneSpec:
    """Textured rectangle: pose maps plane-local (x, y, 0) into the rig frame."""

    pose: RigidPose
    width_m: float
    height_m: float
    albedo_rgb: tuple = (0.55, 0.55, 0.55)
    uv_value: float = 0.15
    thermal_value: float = 0.20

    def __post_init__(self):
        if self.width_m <= 0 or self.height_m <= 0:
            raise ValueError("plane extent must be positive")

    def to_dict(self) -> dict:
        return {"pose": _pose_to_dict(self.pose), "width_m": self.width_m,
                "height_m": self.height_m, "albedo_rgb": list(self.albedo_rgb),
                "uv_value": self.uv_value, "thermal_value": self.thermal_value}

    @classmethod
    def from_dict(cls, d: dict) -> "PlaneSpec":
        return cls(pose=_pose_from_dict(d["pose"]),
                   width_m=float(d["width_m"]), height_m=float(d["height_m"]),
                   albedo_rgb=tuple(d.get("albedo_rgb", (0.55, 0.55, 0.55))),
                   uv_value=float(d.get("uv_value", 0.15)),
                   thermal_value=float(d.get("thermal_value", 0.20)))


@dataclass(frozen=True)
class PatchSpec:
    """Rectangle on a declared plane, bright in exactly one hidden spectrum."""

    plane: int
    x_m: float
    y_m: float
    width_m: float
    height_m: float
    value: float = 0.95

    def to_dict(self) -> dict:
        return {"plane": self.plane, "x_m": self.x_m, "y_m": self.y_m,
                "width_m": self.width_m, "height_m": self.height_m,
                "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchSpec":
        return cls(plane=int(d["plane"]), x_m=float(d["x_m"]), y_m=float(d["y_m"]),
                   width_m=float(d["width_m"]), height_m=float(d["height_m"]),
                   value=float(d.get("value", 0.95)))


@dataclass(frozen=True)
class SceneSpec:
    """Planes plus hidden uv/thermal patches and per-spectrum noise levels."""

    planes: tuple
    uv_patches: tuple = ()
    thermal_patches: tuple = ()
    noise_sigma: dict = field(default_factory=lambda: {
        "rgb": 0.0, "thermal": 0.0, "uv": 0.0})

    def __post_init__(self):
        object.__setattr__(self, "planes", tuple(self.planes))
        object.__setattr__(self, "uv_patches", tuple(self.uv_patches))
        object.__setattr__(self, "thermal_patches", tuple(self.thermal_patches))
        for patch in self.uv_patches + self.thermal_patches:
            if not 0 <= patch.plane < len(self.planes):
                raise ValueError(f"patch references undeclared plane {patch.plane}")
            plane = self.planes[patch.plane]
            inside = (0 <= patch.x_m and 0 <= patch.y_m
                      and patch.x_m + patch.width_m <= plane.width_m
                      and patch.y_m + patch.height_m <= plane.height_m)
            if not inside:
                raise ValueError("patch rectangle extends beyond its plane")

    def to_dict(self) -> dict:
        return {"planes": [p.to_dict() for p in self.planes],
                "uv_patches": [p.to_dict() for p in self.uv_patches],
                "thermal_patches": [p.to_dict() for p in self.thermal_patches],
                "noise_sigma": dict(self.noise_sigma)}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            planes=tuple(PlaneSpec.from_dict(p) for p in d["planes"]),
            uv_patches=tuple(PatchSpec.from_dict(p) for p in d.get("uv_patches", ())),
            thermal_patches=tuple(
                PatchSpec.from_dict(p) for p in d.get("thermal_patches", ())),
            noise_sigma=dict(d.get("noise_sigma",
                                   {"rgb": 0.0, "thermal": 0.0, "uv": 0.0})))


def default_scene() -> SceneSpec:
    """One large wall 1 m ahead with a hidden UV patch and a hidden hot patch.

    The wall comfortably covers every camera frustum at this distance, so a
    default render produces a fully valid depth raster.
    """
    wall = PlaneSpec(
        pose=RigidPose(np.eye(3), np.array([-3.0, -2.5, 1.0])),
        width_m=6.0, height_m=5.0,
        albedo_rgb=(0.55, 0.50, 0.45), uv_value=0.15, thermal_value=0.20)
    uv_mark = PatchSpec(plane=0, x_m=2.55, y_m=2.15, width_m=0.25, height_m=0.20,
                        value=0.95)
    hot = PatchSpec(plane=0, x_m=3.25, y_m=2.45, width_m=0.20, height_m=0.25,
                    value=0.90)
    return SceneSpec(planes=(wall,), uv_patches=(uv_mark,), thermal_patches=(hot,))


# ---------------------------------------------------------------------------
# captured frame


@dataclass
class MultispectralFrame:
    """One synchronized capture: rgb + registered depth, thermal, uv rasters.

    rgb is 8-bit HxWx3; depth is 16-bit millimeters on the rgb grid with 0
    marking invalid pixels; thermal is 16-bit and uv 8-bit, each on its own
    camera's grid. ``timestamp`` is a shared integer tick.
    """

    rgb: np.ndarray
    thermal: np.ndarray
    uv: np.ndarray
    depth: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        checks = (
            ("rgb", self.rgb, np.uint8, 3),
            ("thermal", self.thermal, np.uint16, 2),
            ("uv", self.uv, np.uint8, 2),
            ("depth", self.depth, np.uint16, 2),
        )
        for name, arr, dtype, ndim in checks:
            if arr.dtype != dtype or arr.ndim != ndim:
                raise ValueError(
                    f"{name}: expected {ndim}-dim {np.dtype(dtype).name} raster, "
                    f"got {arr.ndim}-dim {arr.dtype}")
        if self.rgb.shape[2] != 3:
            raise ValueError("rgb raster must have 3 channels")
        if self.depth.shape != self.rgb.shape[:2]:
            raise ValueError("depth raster must be registered to the rgb grid")

    def validate_against(self, rig: RigConfig):
        pairs = (("rgb", self.rgb), ("thermal", self.thermal),
                 ("uv", self.uv), ("depth", self.depth))
        for cam, arr in pairs:
            intr = rig.intrinsics[cam]
            if arr.shape[:2] != (intr.height, intr.width):
                raise ValueError(
                    f"{cam} raster {arr.shape[1]}x{arr.shape[0]} does not match "
                    f"camera {intr.width}x{intr.height}")
