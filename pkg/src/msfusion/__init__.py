"""Multispectral rig calibration, cross-spectrum registration, and fusion."""

__version__ = "0.1.0"

from .calibrate import (
    CalibrationResult,
    CameraCalibrator,
    RelativeExtrinsics,
    RigCalibrator,
    calibrate_camera,
    calibrate_rig,
)
from .detect import GridObservation, detect_grid
from .errors import (
    AllBadPoints,
    AmbiguousGrid,
    DegenerateConfiguration,
    DimensionMismatch,
    DivergedRefinement,
    EmptyScene,
    IllConditioned,
    InsufficientViews,
    MsfusionError,
    NoConvergence,
    NonPositiveDepth,
    NoSharedViews,
    TargetBehindCamera,
    WrongBlobCount,
)
from .fuse import (
    FusionConfig,
    MultispectralPointCloud,
    SpectralFuser,
    build_point_cloud,
    fuse_frame,
    highlight,
)
from .geometry import (
    CameraIntrinsics,
    DistortionCoefficients,
    RigidPose,
    distort_pixel,
    project,
    transform,
    undistort_pixel,
    unproject,
)
from .register import (
    AlignedFrame,
    FrameAligner,
    PixelMapping,
    align_frame,
    alignment_inputs,
    build_mapping,
    harmonize_resolution,
    sample_secondary,
)
from .rig import (
    MultispectralFrame,
    RigConfig,
    SceneSpec,
    TargetSpec,
    default_rig,
    default_scene,
    default_target_views,
    wide_field_views,
)

__all__ = [
    "AlignedFrame",
    "AllBadPoints",
    "AmbiguousGrid",
    "CalibrationResult",
    "CameraCalibrator",
    "CameraIntrinsics",
    "DegenerateConfiguration",
    "DimensionMismatch",
    "DistortionCoefficients",
    "DivergedRefinement",
    "EmptyScene",
    "FrameAligner",
    "FusionConfig",
    "GridObservation",
    "IllConditioned",
    "InsufficientViews",
    "MsfusionError",
    "MultispectralFrame",
    "MultispectralPointCloud",
    "NoConvergence",
    "NonPositiveDepth",
    "NoSharedViews",
    "PixelMapping",
    "RelativeExtrinsics",
    "RigCalibrator",
    "RigConfig",
    "RigidPose",
    "SceneSpec",
    "SpectralFuser",
    "TargetBehindCamera",
    "TargetSpec",
    "WrongBlobCount",
    "align_frame",
    "alignment_inputs",
    "build_mapping",
    "build_point_cloud",
    "calibrate_camera",
    "calibrate_rig",
    "default_rig",
    "default_scene",
    "default_target_views",
    "detect_grid",
    "distort_pixel",
    "fuse_frame",
    "harmonize_resolution",
    "highlight",
    "project",
    "sample_secondary",
    "transform",
    "undistort_pixel",
    "unproject",
    "wide_field_views",
]
