"""Exception types raised by the pipeline.

Every error below marks a violated contract, not a recoverable condition:
callers that can tolerate the condition (e.g. registration treating bad
pixels as BadPoints) filter their inputs instead of catching these.
"""


class MsfusionError(Exception):
    """Base class for all package-specific errors."""


class NonPositiveDepth(MsfusionError):
    """A point with z <= 0 reached a projection or unprojection."""


class NoConvergence(MsfusionError):
    """Iterative undistortion failed to converge within its budget."""


class TargetBehindCamera(MsfusionError):
    """The calibration target lies entirely behind the camera."""


class EmptyScene(MsfusionError):
    """A scene render was requested with no geometry in front of any camera."""


class WrongBlobCount(MsfusionError):
    """Blob detection found a number of blobs incompatible with the grid."""


class AmbiguousGrid(MsfusionError):
    """Detected centroids could not be ordered into an unambiguous lattice."""


class DegenerateConfiguration(MsfusionError):
    """Point correspondences do not determine a unique homography."""


class InsufficientViews(MsfusionError):
    """Too few usable views for the requested estimation."""


class IllConditioned(MsfusionError):
    """The intrinsic constraint system is rank-deficient or not positive definite."""


class DivergedRefinement(MsfusionError):
    """Nonlinear refinement kept proposing worse solutions."""


class NoSharedViews(MsfusionError):
    """Two cameras have no view observed by both."""


class AllBadPoints(MsfusionError):
    """An operation needing valid pixels received none."""


class DimensionMismatch(MsfusionError):
    """Raster or array dimensions disagree with the camera or each other."""
