"""Planar calibration: homographies, closed-form intrinsics, bundle refinement.

The estimation chain is deliberately self-contained (no calibration library
underneath) so every numerical step stays inspectable:

1. per-view homographies by Hartley-normalized DLT,
2. closed-form intrinsics from the absolute-conic constraints the
   homographies impose (skew forced to zero afterwards),
3. per-view planar poses from the homography columns, snapped to the
   nearest rotation, cheirality fixed so the board sits in front,
4. joint Levenberg-Marquardt refinement of intrinsics, distortion, and all
   view poses against the raw centroids, with an analytic Jacobian,
5. relative extrinsics between cameras composed per shared view and
   averaged (quaternion mean for rotation).

Pixel-space RMS here is sqrt(mean squared point distance), i.e. u and v
errors of one centroid count as a single squared distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points
from .errors import (
    DegenerateConfiguration,
    DivergedRefinement,
    IllConditioned,
    InsufficientViews,
    NoSharedViews,
)
from .geometry import (
    CameraIntrinsics,
    DistortionCoefficients,
    RigidPose,
    average_quaternions,
    axis_angle_from_rotation,
    nearest_rotation,
    project,
    quaternion_from_rotation,
    right_jacobian,
    rodrigues,
    rotation_angle_deg,
    rotation_from_quaternion,
    skew_matrix,
)

_INTRINSIC_NAMES = ("fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2", "k3")


# ---------------------------------------------------------------------------
# homography


def _hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin, mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    mean_dist = np.linalg.norm(points - centroid, axis=1).mean()
    if mean_dist < 1e-12:
        raise DegenerateConfiguration("points are coincident")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]],
                     [0.0, s, -s * centroid[1]],
                     [0.0, 0.0, 1.0]])


def estimate_homography(object_xy, image_xy):
    """Plane-to-image homography by normalized DLT.

    ``object_xy`` may be (n, 2) board coordinates or (n, 3) with z = 0.
    Returns ``(H, rms_px)``: H scaled to unit Frobenius norm with H[2,2] >= 0,
    and the RMS transfer error of the inputs under H. Raises
    DegenerateConfiguration when the correspondences do not pin down a
    unique solution (fewer than 4 points in general position).
    """
    obj = np.asarray(object_xy, dtype=np.float64)
    if obj.ndim == 2 and obj.shape[1] == 3:
        obj = obj[:, :2]
    obj = check_points(obj, "object_xy", 2)
    img = check_points(image_xy, "image_xy", 2)
    if obj.shape != img.shape or obj.ndim != 2:
        raise ValueError(f"point sets disagree: {obj.shape} vs {img.shape}")
    n = obj.shape[0]
    if n < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {n}")

    t_obj = _hartley_normalization(obj)
    t_img = _hartley_normalization(img)
    oh = np.column_stack([obj, np.ones(n)]) @ t_obj.T
    ih = np.column_stack([img, np.ones(n)]) @ t_img.T

    a = np.zeros((2 * n, 9))
    a[0::2, 0:2] = -oh[:, :2]
    a[0::2, 2] = -1.0
    a[0::2, 6:8] = ih[:, 0:1] * oh[:, :2]
    a[0::2, 8] = ih[:, 0]
    a[1::2, 3:5] = -oh[:, :2]
    a[1::2, 5] = -1.0
    a[1::2, 6:8] = ih[:, 1:2] * oh[:, :2]
    a[1::2, 8] = ih[:, 1]

    _, s, vt = np.linalg.svd(a)
    # a unique solution needs rank 8: the 8th singular value must be healthy
    if s[7] < 1e-9 * s[0]:
        raise DegenerateConfiguration(
            "correspondences are degenerate (collinear or repeated points)")
    h = vt[-1].reshape(3, 3)
    H = np.linalg.inv(t_img) @ h @ t_obj
    H = H / np.linalg.norm(H)
    if H[2, 2] < 0:
        H = -H

    mapped = np.column_stack([obj, np.ones(n)]) @ H.T
    mapped = mapped[:, :2] / mapped[:, 2:3]
    rms = float(np.sqrt(np.mean(np.sum((mapped - img) ** 2, axis=1))))
    return H, rms


# ---------------------------------------------------------------------------
# closed-form intrinsics


def _conic_row(H: np.ndarray, i: int, j: int) -> np.ndarray:
    """Constraint row v_ij on b = (B11, B12, B22, B13, B23, B33)."""
    hi, hj = H[:, i], H[:, j]
    return np.array([
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ])


def zhang_intrinsics(homographies, width: int, height: int) -> CameraIntrinsics:
    """Closed-form pinhole intrinsics from plane homographies.

    Each homography contributes the two classic constraints on the image of
    the absolute conic B = K^-T K^-1; the stacked system is solved by SVD
    and K is read off B in closed form. Skew is estimated and then forced
    to zero, matching the rig's square-pixel cameras. Raises
    InsufficientViews for fewer than 3 views and IllConditioned when the
    constraint system is rank-deficient (e.g. all views fronto-parallel) or
    B is not definite.
    """
    hs = list(homographies)
    if len(hs) < 3:
        raise InsufficientViews(f"need at least 3 views, got {len(hs)}")
    rows = []
    for H in hs:
        rows.append(_conic_row(H, 0, 1))
        rows.append(_conic_row(H, 0, 0) - _conic_row(H, 1, 1))
    v = np.array(rows)

    _, s, vt = np.linalg.svd(v)
    if s[-2] < 1e-9 * s[0]:
        raise IllConditioned(
            "conic constraint system is rank-deficient; vary the view poses")
    b = vt[-1]
    if b[0] < 0:
        b = -b
    b11, b12, b22, b13, b23, b33 = b

    denom = b11 * b22 - b12 ** 2
    if denom <= 0 or b11 <= 0:
        raise IllConditioned("recovered conic is not positive definite")
    v0 = (b12 * b13 - b11 * b23) / denom
    lam = b33 - (b13 ** 2 + v0 * (b12 * b13 - b11 * b23)) / b11
    if lam / b11 <= 0 or lam * b11 / denom <= 0:
        raise IllConditioned("recovered conic is not positive definite")
    alpha = np.sqrt(lam / b11)
    beta = np.sqrt(lam * b11 / denom)
    gamma = -b12 * alpha ** 2 * beta / lam
    u0 = gamma * v0 / beta - b13 * alpha ** 2 / lam

    try:
        return CameraIntrinsics(fx=float(alpha), fy=float(beta),
                                cx=float(u0), cy=float(v0),
                                width=width, height=height, skew=0.0)
    except ValueError as exc:
        raise IllConditioned(f"implausible intrinsics from conic: {exc}") from exc


# ---------------------------------------------------------------------------
# planar pose


def estimate_pose(H, intrinsics: CameraIntrinsics) -> RigidPose:
    """Board-to-camera pose from a plane homography and known intrinsics.

    The first two rotation columns are the scaled K^-1 h1, K^-1 h2; the
    result is snapped to the nearest rotation and the overall homography
    sign is chosen so the board lies in front of the camera (t_z > 0).
    """
    H = np.asarray(H, dtype=np.float64)
    kinv = np.linalg.inv(intrinsics.matrix)
    r1 = kinv @ H[:, 0]
    r2 = kinv @ H[:, 1]
    t = kinv @ H[:, 2]
    scale = 1.0 / np.linalg.norm(r1)
    r1, r2, t = r1 * scale, r2 * scale, t * scale
    if abs(t[2]) < 1e-12:
        raise DegenerateConfiguration("board plane passes through the camera center")
    if t[2] < 0:
        r1, r2, t = -r1, -r2, -t
    rotation = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return RigidPose(rotation, t)


# ---------------------------------------------------------------------------
# joint refinement


class ReprojectionProblem:
    """Reprojection residuals and analytic Jacobian for one camera.

    Parameter vector: the free entries of (fx, fy, cx, cy, k1, k2, p1, p2,
    k3) followed by 6 pose parameters per view (axis-angle, translation).
    Rows come in (u, v) pairs per observed centroid, ordered by view.
    """

    def __init__(self, observations, free_mask=None, skew: float = 0.0):
        self.observations = list(observations)
        if not self.observations:
            raise InsufficientViews("no observations to refine against")
        self.skew = float(skew)
        self.free = (np.ones(9, dtype=bool) if free_mask is None
                     else np.asarray(free_mask, dtype=bool).copy())
        if self.free.shape != (9,):
            raise ValueError("free_mask must cover the 9 intrinsic parameters")
        self.n_intr = int(self.free.sum())
        self.n_views = len(self.observations)
        self.n_params = self.n_intr + 6 * self.n_views
        self.n_residuals = 2 * sum(len(o) for o in self.observations)

    def pack(self, intrinsics: CameraIntrinsics, poses) -> np.ndarray:
        d = intrinsics.distortion
        intr9 = np.array([intrinsics.fx, intrinsics.fy, intrinsics.cx,
                          intrinsics.cy, d.k1, d.k2, d.p1, d.p2, d.k3])
        self._fixed = intr9.copy()
        chunks = [intr9[self.free]]
        for pose in poses:
            chunks.append(axis_angle_from_rotation(pose.rotation))
            chunks.append(pose.translation)
        return np.concatenate(chunks)

    def unpack(self, theta: np.ndarray, width: int, height: int):
        intr9 = self._fixed.copy()
        intr9[self.free] = theta[:self.n_intr]
        fx, fy, cx, cy, k1, k2, p1, p2, k3 = intr9
        intrinsics = CameraIntrinsics(
            fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height,
            skew=self.skew,
            distortion=DistortionCoefficients(k1=k1, k2=k2, p1=p1, p2=p2, k3=k3))
        poses = []
        for j in range(self.n_views):
            base = self.n_intr + 6 * j
            poses.append(RigidPose(rodrigues(theta[base:base + 3]),
                                   theta[base + 3:base + 6]))
        return intrinsics, poses

    def _intr9(self, theta):
        intr9 = self._fixed.copy()
        intr9[self.free] = theta[:self.n_intr]
        return intr9

    def residuals(self, theta: np.ndarray):
        """Stacked (u, v) residuals, or None when a point leaves z > 0."""
        fx, fy, cx, cy, k1, k2, p1, p2, k3 = self._intr9(theta)
        out = np.empty(self.n_residuals)
        row = 0
        for j, obs in enumerate(self.observations):
            base = self.n_intr + 6 * j
            R = rodrigues(theta[base:base + 3])
            t = theta[base + 3:base + 6]
            P = obs.object_points @ R.T + t
            z = P[:, 2]
            if np.any(z <= 1e-9) or not np.all(np.isfinite(P)):
                return None
            x = P[:, 0] / z
            y = P[:, 1] / z
            r2 = x * x + y * y
            radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
            dx = x * radial + 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
            dy = y * radial + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
            u = fx * dx + self.skew * dy + cx
            v = fy * dy + cy
            n = len(obs)
            out[row:row + 2 * n:2] = u - obs.image_points[:, 0]
            out[row + 1:row + 2 * n:2] = v - obs.image_points[:, 1]
            row += 2 * n
        return out

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        fx, fy, cx, cy, k1, k2, p1, p2, k3 = self._intr9(theta)
        J = np.zeros((self.n_residuals, self.n_params))
        row = 0
        for j, obs in enumerate(self.observations):
            base = self.n_intr + 6 * j
            omega = theta[base:base + 3]
            R = rodrigues(omega)
            t = theta[base + 3:base + 6]
            X = obs.object_points
            P = X @ R.T + t
            z = P[:, 2]
            x = P[:, 0] / z
            y = P[:, 1] / z
            r2 = x * x + y * y
            radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
            dx = x * radial + 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
            dy = y * radial + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
            n = len(obs)

            # d(u,v)/d(intr9), before masking
            d_int = np.zeros((n, 2, 9))
            d_int[:, 0, 0] = dx
            d_int[:, 1, 1] = dy
            d_int[:, 0, 2] = 1.0
            d_int[:, 1, 3] = 1.0
            # distortion columns: chain through (dx, dy)
            ddist = np.zeros((n, 2, 5))  # k1, k2, p1, p2, k3
            ddist[:, 0, 0] = x * r2
            ddist[:, 0, 1] = x * r2 * r2
            ddist[:, 0, 2] = 2 * x * y
            ddist[:, 0, 3] = r2 + 2 * x * x
            ddist[:, 0, 4] = x * r2 ** 3
            ddist[:, 1, 0] = y * r2
            ddist[:, 1, 1] = y * r2 * r2
            ddist[:, 1, 2] = r2 + 2 * y * y
            ddist[:, 1, 3] = 2 * x * y
            ddist[:, 1, 4] = y * r2 ** 3
            a_k = np.array([[fx, self.skew], [0.0, fy]])
            d_int[:, :, 4:9] = np.einsum("rc,nck->nrk", a_k, ddist)

            # d(dx,dy)/d(x,y)
            c = k1 + r2 * (2 * k2 + 3 * k3 * r2)
            j_dist = np.empty((n, 2, 2))
            j_dist[:, 0, 0] = radial + 2 * x * x * c + 2 * p1 * y + 6 * p2 * x
            j_dist[:, 0, 1] = 2 * x * y * c + 2 * p1 * x + 2 * p2 * y
            j_dist[:, 1, 0] = 2 * x * y * c + 2 * p1 * x + 2 * p2 * y
            j_dist[:, 1, 1] = radial + 2 * y * y * c + 6 * p1 * y + 2 * p2 * x

            # d(x,y)/dP
            j_norm = np.zeros((n, 2, 3))
            j_norm[:, 0, 0] = 1.0 / z
            j_norm[:, 1, 1] = 1.0 / z
            j_norm[:, 0, 2] = -x / z
            j_norm[:, 1, 2] = -y / z

            # dP/d(omega) = -R [X]x J_r(omega), dP/dt = I
            jr = right_jacobian(omega)
            dP_omega = np.einsum("ab,nbc,cd->nad",
                                 -R, np.stack([skew_matrix(xi) for xi in X]), jr)

            front = np.einsum("rc,ncd,nde->nre", a_k, j_dist, j_norm)
            d_pose = np.concatenate(
                [np.einsum("nre,nef->nrf", front, dP_omega), front], axis=2)

            block = J[row:row + 2 * n]
            block[0::2, :self.n_intr] = d_int[:, 0, :][:, self.free]
            block[1::2, :self.n_intr] = d_int[:, 1, :][:, self.free]
            block[0::2, base:base + 6] = d_pose[:, 0, :]
            block[1::2, base:base + 6] = d_pose[:, 1, :]
            row += 2 * n
        return J


@dataclass(frozen=True)
class RefineResult:
    intrinsics: CameraIntrinsics
    poses: list
    rms_px: float
    iterations: int
    initial_rms_px: float


def refine(intrinsics: CameraIntrinsics, poses, observations, *,
           fix_k3: bool = False, fix_intrinsics: bool = False,
           max_iterations: int = 100,
           initial_damping: float = 1e-3) -> RefineResult:
    """Jointly refine intrinsics, distortion, and view poses by damped
    least squares.

    Accept/reject Levenberg-Marquardt with multiplicative damping (x10 on a
    rejected proposal, /10 on an accepted one) on the Marquardt-scaled
    normal equations. Stops when the relative cost change drops below 1e-12
    or after ``max_iterations``. Raises DivergedRefinement after 10
    consecutive proposals that failed to improve the cost.
    ``fix_intrinsics`` freezes all 9 intrinsic parameters and refines only
    the view poses.
    """
    observations = list(observations)
    if len(observations) != len(poses) or not observations:
        raise ValueError("need one initial pose per observation")
    free = np.zeros(9, dtype=bool) if fix_intrinsics else np.ones(9, dtype=bool)
    if fix_k3:
        free[8] = False
    problem = ReprojectionProblem(observations, free_mask=free,
                                  skew=intrinsics.skew)
    theta = problem.pack(intrinsics, poses)
    width, height = intrinsics.width, intrinsics.height

    r = problem.residuals(theta)
    if r is None:
        raise DivergedRefinement("initial poses put the board behind the camera")
    cost = float(r @ r)
    initial_rms = _rms_from_cost(cost, problem)
    damping = initial_damping
    rejects = 0
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        J = problem.jacobian(theta)
        jtj = J.T @ J
        g = J.T @ r
        scale = np.diag(np.maximum(np.diag(jtj), 1e-12))
        try:
            step = np.linalg.solve(jtj + damping * scale, -g)
        except np.linalg.LinAlgError:
            step = None

        new_cost = np.inf
        if step is not None and np.all(np.isfinite(step)):
            r_try = problem.residuals(theta + step)
            if r_try is not None:
                new_cost = float(r_try @ r_try)

        if new_cost < cost:
            rel_drop = (cost - new_cost) / max(cost, 1e-300)
            theta = theta + step
            r = r_try
            cost = new_cost
            damping = max(damping / 10.0, 1e-12)
            rejects = 0
            if rel_drop < 1e-12 or cost == 0.0:
                break
        else:
            # Once the RMS drops below any physical meaning, rejected
            # proposals are pure rounding noise.
            if _rms_from_cost(cost, problem) < 1e-10:
                break
            # A tiny step that barely overshoots means the basin is flat at
            # machine precision: that is convergence, not divergence.
            flat = (step is not None and np.all(np.isfinite(step))
                    and np.isfinite(new_cost)
                    and new_cost <= cost * (1.0 + 1e-4)
                    and np.linalg.norm(step) <= 1e-6 * (np.linalg.norm(theta) + 1.0))
            if flat:
                break
            damping *= 10.0
            rejects += 1
            if rejects >= 10:
                raise DivergedRefinement(
                    f"10 consecutive non-improving proposals (cost {cost:.3e})")

    final_intr, final_poses = problem.unpack(theta, width, height)
    return RefineResult(intrinsics=final_intr, poses=final_poses,
                        rms_px=_rms_from_cost(cost, problem),
                        iterations=iterations, initial_rms_px=initial_rms)


def _rms_from_cost(cost: float, problem: ReprojectionProblem) -> float:
    n_points = problem.n_residuals // 2
    return float(np.sqrt(cost / n_points))


def estimate_view_pose(intrinsics: CameraIntrinsics,
                       observation) -> RigidPose:
    """Board-to-camera pose of a single view with intrinsics held fixed.

    Initializes from the view homography and polishes the 6 pose parameters
    by the same damped least squares as full refinement. This is the
    pose-estimation path when the camera is already calibrated.
    """
    H, _ = estimate_homography(observation.object_points,
                               observation.image_points)
    pose0 = estimate_pose(H, intrinsics)
    result = refine(intrinsics, [pose0], [observation],
                    fix_intrinsics=True, max_iterations=50)
    return result.poses[0]


# ---------------------------------------------------------------------------
# relative extrinsics


@dataclass(frozen=True)
class RelativeExtrinsics:
    """Rigid transform taking source-camera points to dest-camera points,
    with the spread of the per-view estimates it was averaged from."""

    source: str
    dest: str
    pose: RigidPose
    rotation_spread_deg: float = 0.0
    translation_spread_m: float = 0.0


def relative_extrinsics(pose_a: RigidPose, pose_b: RigidPose) -> RigidPose:
    """A-to-B transform from two board poses of the same view."""
    return pose_b @ pose_a.inverse()


def average_relative_extrinsics(pose_pairs, source: str = "a",
                                dest: str = "b") -> RelativeExtrinsics:
    """Average A-to-B transforms over shared views.

    Rotations are averaged as quaternions (signs aligned to the first,
    result renormalized), translations arithmetically; the reported spreads
    are the worst per-view deviations from the mean.
    """
    pairs = list(pose_pairs)
    if not pairs:
        raise NoSharedViews(f"no shared views between {source} and {dest}")
    rel = [relative_extrinsics(pa, pb) for pa, pb in pairs]
    quats = [quaternion_from_rotation(p.rotation) for p in rel]
    mean_R = rotation_from_quaternion(average_quaternions(quats))
    mean_t = np.mean([p.translation for p in rel], axis=0)
    rot_spread = max(rotation_angle_deg(mean_R, p.rotation) for p in rel)
    tr_spread = max(float(np.linalg.norm(p.translation - mean_t)) for p in rel)
    return RelativeExtrinsics(source=source, dest=dest,
                              pose=RigidPose(mean_R, mean_t),
                              rotation_spread_deg=rot_spread,
                              translation_spread_m=tr_spread)


# ---------------------------------------------------------------------------
# result containers


@dataclass(frozen=True)
class CameraCalibration:
    """One camera's estimated intrinsics plus its per-view board poses."""

    intrinsics: CameraIntrinsics
    view_poses: dict
    rms_px: float
    initial_rms_px: float = 0.0


@dataclass(frozen=True)
class CalibrationResult:
    """Everything the registration stage needs, serializable to JSON."""

    cameras: dict
    relative: dict = field(default_factory=dict)

    def relative_pose(self, source: str, dest: str) -> RigidPose:
        key = (source, dest)
        if key in self.relative:
            return self.relative[key].pose
        back = (dest, source)
        if back in self.relative:
            return self.relative[back].pose.inverse()
        raise KeyError(f"no relative extrinsics between {source} and {dest}")

    def to_dict(self) -> dict:
        cams = {}
        for cam, c in self.cameras.items():
            intr = c.intrinsics
            cams[cam] = {
                "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                "width": intr.width, "height": intr.height, "skew": intr.skew,
                "distortion": {
                    "k1": intr.distortion.k1, "k2": intr.distortion.k2,
                    "p1": intr.distortion.p1, "p2": intr.distortion.p2,
                    "k3": intr.distortion.k3},
                "rms_px": c.rms_px,
                "initial_rms_px": c.initial_rms_px,
                "views": {view: {"rotation": pose.rotation.tolist(),
                                 "translation_m": pose.translation.tolist()}
                          for view, pose in c.view_poses.items()},
            }
        rel = [{
            "source": r.source, "dest": r.dest,
            "rotation": r.pose.rotation.tolist(),
            "translation_m": r.pose.translation.tolist(),
            "rotation_spread_deg": r.rotation_spread_deg,
            "translation_spread_m": r.translation_spread_m,
        } for r in self.relative.values()]
        return {"cameras": cams, "relative": rel}

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        cameras = {}
        for cam, c in d["cameras"].items():
            dist = DistortionCoefficients(**c.get("distortion", {}))
            intr = CameraIntrinsics(
                fx=float(c["fx"]), fy=float(c["fy"]), cx=float(c["cx"]),
                cy=float(c["cy"]), width=int(c["width"]), height=int(c["height"]),
                skew=float(c.get("skew", 0.0)), distortion=dist)
            poses = {view: RigidPose(np.asarray(p["rotation"], dtype=np.float64),
                                     np.asarray(p["translation_m"], dtype=np.float64))
                     for view, p in c.get("views", {}).items()}
            cameras[cam] = CameraCalibration(
                intrinsics=intr, view_poses=poses,
                rms_px=float(c.get("rms_px", 0.0)),
                initial_rms_px=float(c.get("initial_rms_px", 0.0)))
        relative = {}
        for r in d.get("relative", ()):
            rel = RelativeExtrinsics(
                source=r["source"], dest=r["dest"],
                pose=RigidPose(np.asarray(r["rotation"], dtype=np.float64),
                               np.asarray(r["translation_m"], dtype=np.float64)),
                rotation_spread_deg=float(r.get("rotation_spread_deg", 0.0)),
                translation_spread_m=float(r.get("translation_spread_m", 0.0)))
            relative[(rel.source, rel.dest)] = rel
        return cls(cameras=cameras, relative=relative)


# ---------------------------------------------------------------------------
# estimators


def calibrate_camera(observations, width: int, height: int, *,
                     fix_k3: bool = False, max_iterations: int = 100,
                     initial_damping: float = 1e-3) -> CameraCalibration:
    """Full single-camera pipeline: homographies, closed form, refinement.

    ``observations`` are GridObservations of one camera, one per view.
    Raises InsufficientViews below 3 views.
    """
    observations = list(observations)
    if len(observations) < 3:
        raise InsufficientViews(
            f"calibration needs at least 3 views, got {len(observations)}")
    homographies = [estimate_homography(o.object_points, o.image_points)[0]
                    for o in observations]
    intr0 = zhang_intrinsics(homographies, width, height)
    poses0 = [estimate_pose(H, intr0) for H in homographies]
    result = refine(intr0, poses0, observations, fix_k3=fix_k3,
                    max_iterations=max_iterations,
                    initial_damping=initial_damping)
    view_poses = {o.view_id: pose
                  for o, pose in zip(observations, result.poses)}
    return CameraCalibration(intrinsics=result.intrinsics,
                             view_poses=view_poses, rms_px=result.rms_px,
                             initial_rms_px=result.initial_rms_px)


class CameraCalibrator(BaseEstimator):
    """Estimator wrapper around :func:`calibrate_camera`.

    ``fit(X)`` takes a sequence of GridObservations for one camera and
    exposes ``intrinsics_``, ``view_poses_``, and ``rms_px_``. Image size
    is a constructor parameter because observations do not carry it.
    """

    def __init__(self, width=640, height=480, fix_k3=False,
                 max_iterations=100, initial_damping=1e-3):
        self.width = width
        self.height = height
        self.fix_k3 = fix_k3
        self.max_iterations = max_iterations
        self.initial_damping = initial_damping

    def fit(self, X, y=None):
        calib = calibrate_camera(
            X, self.width, self.height, fix_k3=self.fix_k3,
            max_iterations=self.max_iterations,
            initial_damping=self.initial_damping)
        self.intrinsics_ = calib.intrinsics
        self.view_poses_ = calib.view_poses
        self.rms_px_ = calib.rms_px
        self.calibration_ = calib
        return self

    def predict(self, X):
        """Reproject the observed lattices with the fitted model.

        Returns one (n, 2) pixel array per observation; unknown view ids
        raise KeyError since their board pose was never estimated.
        """
        check_is_fitted(self, "intrinsics_")
        out = []
        for obs in X:
            pose = self.view_poses_[obs.view_id]
            out.append(project(pose.apply(obs.object_points), self.intrinsics_))
        return out


class RigCalibrator(BaseEstimator):
    """Estimator wrapper around :func:`calibrate_rig`.

    ``fit(X)`` takes GridObservations from any mix of cameras and exposes
    ``result_`` plus per-camera ``cameras_`` and reference-relative
    ``relative_`` transforms.
    """

    def __init__(self, sizes=None, reference="rgb", fix_k3=("thermal",),
                 max_iterations=100, initial_damping=1e-3):
        self.sizes = sizes
        self.reference = reference
        self.fix_k3 = fix_k3
        self.max_iterations = max_iterations
        self.initial_damping = initial_damping

    def fit(self, X, y=None):
        sizes = self.sizes
        if sizes is None:
            sizes = {"rgb": (640, 480), "thermal": (160, 120),
                     "uv": (640, 480), "depth": (640, 480)}
        result = calibrate_rig(
            X, sizes, reference=self.reference, fix_k3=self.fix_k3,
            max_iterations=self.max_iterations,
            initial_damping=self.initial_damping)
        self.result_ = result
        self.cameras_ = result.cameras
        self.relative_ = result.relative
        return self


def calibrate_rig(observations, sizes: dict, *, reference: str = "rgb",
                  fix_k3=("thermal",), max_iterations: int = 100,
                  initial_damping: float = 1e-3) -> CalibrationResult:
    """Calibrate every camera present in ``observations`` and chain the
    relative extrinsics from the reference camera to each of the others.

    ``sizes`` maps camera ids to (width, height). Views are matched across
    cameras by ``view_id``; each pair needs at least one shared view
    (NoSharedViews otherwise).
    """
    by_camera: dict = {}
    for obs in observations:
        by_camera.setdefault(obs.camera_id, []).append(obs)
    if reference not in by_camera:
        raise InsufficientViews(f"no observations for reference {reference!r}")

    cameras = {}
    for cam, obs_list in by_camera.items():
        width, height = sizes[cam]
        cameras[cam] = calibrate_camera(
            obs_list, width, height, fix_k3=cam in fix_k3,
            max_iterations=max_iterations, initial_damping=initial_damping)

    relative = {}
    ref_poses = cameras[reference].view_poses
    for cam in by_camera:
        if cam == reference:
            continue
        shared = [v for v in ref_poses if v in cameras[cam].view_poses]
        pairs = [(ref_poses[v], cameras[cam].view_poses[v]) for v in shared]
        rel = average_relative_extrinsics(pairs, source=reference, dest=cam)
        relative[(reference, cam)] = rel
    return CalibrationResult(cameras=cameras, relative=relative)
