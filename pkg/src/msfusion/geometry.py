"""Camera geometry: pinhole projection, Brown-Conrady distortion, rigid poses.

Conventions used throughout the package:

* Pixel coordinates are (u, v) with u along image width and v along height;
  (0, 0) is the center of the top-left pixel.
* Camera frame: x right, y down, z forward (points in front have z > 0).
* Normalized image coordinates are (x, y) = (X/Z, Y/Z) before distortion.
* Rotations are 3x3 orthonormal matrices with det +1; ``RigidPose`` maps
  points from its source frame into its destination frame as R @ p + t.
* All lengths are meters, all angles radians unless a name says otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from ._validation import check_points
from .errors import DimensionMismatch, NoConvergence, NonPositiveDepth

ROTATION_TOL = 1e-9


# ---------------------------------------------------------------------------
# distortion


@dataclass(frozen=True)
class DistortionCoefficients:
    """Brown-Conrady lens model: three radial terms, two tangential."""

    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    k3: float = 0.0

    def as_array(self) -> npt.NDArray[np.float64]:
        return np.array([self.k1, self.k2, self.p1, self.p2, self.k3])

    @classmethod
    def from_array(cls, a) -> "DistortionCoefficients":
        k1, k2, p1, p2, k3 = (float(v) for v in np.asarray(a).ravel())
        return cls(k1, k2, p1, p2, k3)

    def is_zero(self) -> bool:
        return not np.any(self.as_array())


def distort_normalized(xy, dist: DistortionCoefficients) -> np.ndarray:
    """Apply the distortion model to normalized coordinates, shape (..., 2)."""
    xy = check_points(xy, "xy", 2)
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (dist.k1 + r2 * (dist.k2 + r2 * dist.k3))
    xd = x * radial + 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def undistort_normalized(xy_d, dist: DistortionCoefficients,
                         max_iterations: int = 20, tol: float = 1e-10):
    """Invert the distortion model by fixed-point iteration.

    Starts from the distorted coordinates and repeatedly solves for the
    undistorted pair that reproduces them. Returns ``(xy, converged)`` where
    ``converged`` flags points whose update fell below ``tol`` (in
    normalized units) within the iteration budget.
    """
    xy_d = check_points(xy_d, "xy_d", 2)
    xd, yd = xy_d[..., 0], xy_d[..., 1]
    x, y = xd.copy(), yd.copy()
    converged = np.zeros(x.shape, dtype=bool)
    for _ in range(max_iterations):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (dist.k1 + r2 * (dist.k2 + r2 * dist.k3))
        dx = 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x)
        dy = dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y
        x_new = (xd - dx) / radial
        y_new = (yd - dy) / radial
        step = np.hypot(x_new - x, y_new - y)
        x, y = x_new, y_new
        converged = step < tol
        if np.all(converged):
            break
    return np.stack([x, y], axis=-1), converged


# ---------------------------------------------------------------------------
# intrinsics


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with pixel dimensions and lens distortion."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    skew: float = 0.0
    distortion: DistortionCoefficients = field(default_factory=DistortionCoefficients)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} image")

    @property
    def matrix(self) -> npt.NDArray[np.float64]:
        """The 3x3 camera matrix K."""
        return np.array([
            [self.fx, self.skew, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    def normalize(self, pixels) -> np.ndarray:
        """Pixels -> normalized coordinates (no undistortion), shape (..., 2)."""
        px = check_points(pixels, "pixels", 2)
        y = (px[..., 1] - self.cy) / self.fy
        x = (px[..., 0] - self.cx - self.skew * y) / self.fx
        return np.stack([x, y], axis=-1)

    def denormalize(self, xy) -> np.ndarray:
        """Normalized coordinates -> pixels, shape (..., 2)."""
        xy = check_points(xy, "xy", 2)
        u = self.fx * xy[..., 0] + self.skew * xy[..., 1] + self.cx
        v = self.fy * xy[..., 1] + self.cy
        return np.stack([u, v], axis=-1)

    def with_distortion(self, dist: DistortionCoefficients) -> "CameraIntrinsics":
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy,
                                self.width, self.height, self.skew, dist)


def project(points, intr: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points (..., 3) to pixel coordinates (..., 2).

    Applies the full distortion model. Raises NonPositiveDepth if any point
    has z <= 0; callers that tolerate such points must filter first.
    """
    pts = check_points(points, "points", 3)
    z = pts[..., 2]
    if np.any(z <= 0):
        raise NonPositiveDepth("projection requires z > 0 for every point")
    xy = pts[..., :2] / z[..., None]
    return intr.denormalize(distort_normalized(xy, intr.distortion))


def unproject(pixels, intr: CameraIntrinsics, depth) -> np.ndarray:
    """Back-project undistorted pixels (..., 2) at metric depth to (..., 3).

    ``pixels`` are ideal pinhole coordinates (already undistorted); ``depth``
    is the z coordinate in meters, broadcastable against the pixel batch.
    Satisfies project(unproject(p, intr, d), intr without distortion) == p.
    """
    px = check_points(pixels, "pixels", 2)
    z = np.asarray(depth, dtype=np.float64)
    if np.any(z <= 0):
        raise NonPositiveDepth("unprojection requires depth > 0")
    xy = intr.normalize(px)
    return np.concatenate([xy * z[..., None], np.broadcast_to(
        z[..., None], xy.shape[:-1] + (1,))], axis=-1)


def undistort_pixel(pixels, intr: CameraIntrinsics,
                    max_iterations: int = 20, tol: float = 1e-10) -> np.ndarray:
    """Map observed (distorted) pixels to ideal pinhole pixels, shape (..., 2).

    Raises NoConvergence if the fixed-point iteration fails for any input.
    """
    xy, ok = undistort_normalized(intr.normalize(pixels), intr.distortion,
                                  max_iterations, tol)
    if not np.all(ok):
        raise NoConvergence(
            f"undistortion failed for {int(np.count_nonzero(~ok))} pixel(s)")
    return intr.denormalize(xy)


def distort_pixel(pixels, intr: CameraIntrinsics) -> np.ndarray:
    """Map ideal pinhole pixels to observed (distorted) pixels."""
    return intr.denormalize(distort_normalized(intr.normalize(pixels),
                                               intr.distortion))


# ---------------------------------------------------------------------------
# rotations


def skew_matrix(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rodrigues(omega) -> np.ndarray:
    """Axis-angle vector (3,) -> rotation matrix via the exponential map."""
    w = np.asarray(omega, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(w)
    K = skew_matrix(w)
    if theta < 1e-8:
        # second-order series keeps the result orthonormal to machine precision
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def right_jacobian(omega) -> np.ndarray:
    """Right Jacobian of SO(3): R(w + d) ~= R(w) @ rodrigues(J_r(w) @ d)."""
    w = np.asarray(omega, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(w)
    K = skew_matrix(w)
    if theta < 1e-6:
        b = 0.5 - theta * theta / 24.0
        c = 1.0 / 6.0 - theta * theta / 120.0
    else:
        b = (1.0 - np.cos(theta)) / (theta * theta)
        c = (theta - np.sin(theta)) / (theta ** 3)
    return np.eye(3) - b * K + c * (K @ K)


def quaternion_from_rotation(R) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w, x, y, z), Shepperd's method."""
    R = np.asarray(R, dtype=np.float64)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return q / np.linalg.norm(q)


def rotation_from_quaternion(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) -> rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def axis_angle_from_rotation(R) -> np.ndarray:
    """Rotation matrix -> axis-angle vector (3,), stable near 0 and pi."""
    q = quaternion_from_rotation(R)
    if q[0] < 0:
        q = -q
    vec_norm = np.linalg.norm(q[1:])
    theta = 2.0 * np.arctan2(vec_norm, q[0])
    if vec_norm < 1e-12:
        return 2.0 * q[1:]
    return q[1:] * (theta / vec_norm)


def average_quaternions(quats) -> np.ndarray:
    """Mean of unit quaternions, signs aligned to the first, renormalized."""
    Q = np.asarray(quats, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] != 4 or Q.shape[0] == 0:
        raise DimensionMismatch(f"expected (n, 4) quaternions, got {Q.shape}")
    signs = np.where(Q @ Q[0] < 0, -1.0, 1.0)
    mean = (Q * signs[:, None]).mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        raise ValueError("quaternion mean degenerate (opposing rotations)")
    return mean / norm


def nearest_rotation(M) -> np.ndarray:
    """Orthonormal matrix (det +1) closest to M in the Frobenius norm."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R


# ---------------------------------------------------------------------------
# rigid poses


@dataclass(frozen=True)
class RigidPose:
    """Rigid transform mapping source-frame points into the destination frame."""

    rotation: npt.NDArray[np.float64]
    translation: npt.NDArray[np.float64]

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise DimensionMismatch(f"rotation must be 3x3, got {R.shape}")
        if not np.allclose(R.T @ R, np.eye(3), atol=ROTATION_TOL, rtol=0):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(R) < 0:
            raise ValueError("rotation has negative determinant")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_axis_angle(cls, omega, translation) -> "RigidPose":
        return cls(rodrigues(omega), np.asarray(translation, dtype=np.float64))

    @classmethod
    def from_matrix(cls, T) -> "RigidPose":
        T = np.asarray(T, dtype=np.float64)
        if T.shape != (4, 4):
            raise DimensionMismatch(f"expected 4x4 transform, got {T.shape}")
        return cls(T[:3, :3], T[:3, 3])

    @property
    def matrix(self) -> npt.NDArray[np.float64]:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        pts = check_points(points, "points", 3)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self after other: (self @ other).apply(p) == self.apply(other.apply(p))."""
        return RigidPose(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: "RigidPose") -> "RigidPose":
        return self.compose(other)

    def inverse(self) -> "RigidPose":
        return RigidPose(self.rotation.T, -self.rotation.T @ self.translation)

    def axis_angle(self) -> np.ndarray:
        return axis_angle_from_rotation(self.rotation)


def transform(pose: RigidPose, points) -> np.ndarray:
    """Functional alias for ``pose.apply(points)``."""
    return pose.apply(points)


def rotation_angle_deg(R_a, R_b) -> float:
    """Geodesic angle between two rotations, in degrees."""
    R = np.asarray(R_a).T @ np.asarray(R_b)
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
