"""Detection and ordering of the calibration target's hole grid.

The pipeline needs hole centroids good to a few millipixels, so the
refinement stage is deliberately careful about two quantization traps:

* The background level is estimated from the image itself (its median)
  rather than assumed. After 8-bit quantization the plate level is not the
  analog plate level, and subtracting the wrong constant leaves residual
  weight on every window pixel, biasing the centroid toward the window
  center by tens of millipixels.
* Each component's weighting window is its bounding box grown by the blob
  edge width, with every window pixel assigned to its nearest component
  center first. Without that guard, a neighbouring blob's edge can leak
  weight into the window and drag the centroid sideways.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from ._validation import check_array
from .errors import AmbiguousGrid, WrongBlobCount

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
_WINDOW_GROW_PX = 4


@dataclass(frozen=True)
class GridObservation:
    """Ordered detections of one target view by one camera.

    ``image_points[i]`` is the centroid paired with ``object_points[i]`` on
    the board plane (z = 0), row-major from the grid's ordering convention.
    """

    camera_id: str
    view_id: str
    image_points: np.ndarray
    object_points: np.ndarray

    def __post_init__(self):
        img = np.asarray(self.image_points, dtype=np.float64)
        obj = np.asarray(self.object_points, dtype=np.float64)
        if img.ndim != 2 or img.shape[1] != 2:
            raise ValueError(f"image_points must be (n, 2), got {img.shape}")
        if obj.shape != (img.shape[0], 3):
            raise ValueError(
                f"object_points {obj.shape} do not pair with image_points {img.shape}")
        if not np.allclose(obj[:, 2], 0.0):
            raise ValueError("object points must lie on the board plane z = 0")
        object.__setattr__(self, "image_points", img)
        object.__setattr__(self, "object_points", obj)

    def __len__(self):
        return self.image_points.shape[0]


def lattice_points(rows: int, cols: int, pitch_m: float) -> np.ndarray:
    """Row-major board coordinates (rows*cols, 3): (col*pitch, row*pitch, 0)."""
    rr, cc = np.mgrid[0:rows, 0:cols]
    return np.column_stack([cc.ravel() * pitch_m, rr.ravel() * pitch_m,
                            np.zeros(rows * cols)])


def detect_blobs(image, expected_count: int | None = None) -> np.ndarray:
    """Centroids (n, 2) of dark blobs on a bright plate, unordered.

    Pixels below mean - 0.5*std are grouped 8-connected; components outside
    [0.2, 5] times the median component area are dropped. Surviving
    components get an intensity-weighted centroid using darkness relative to
    the image median as weight. Raises WrongBlobCount when ``expected_count``
    is given and the filtered count differs.
    """
    img = check_array(image, "image", ndim=2, dtype_kind="uif").astype(np.float64)
    threshold = img.mean() - 0.5 * img.std()
    labels, n_raw = ndimage.label(img < threshold, structure=_EIGHT_CONNECTED)
    if n_raw == 0:
        if expected_count is not None:
            raise WrongBlobCount(f"found 0 blobs, expected {expected_count}")
        return np.empty((0, 2))

    areas = np.bincount(labels.ravel())[1:]
    median_area = np.median(areas)
    keep = np.nonzero((areas >= 0.2 * median_area) & (areas <= 5 * median_area))[0] + 1
    if expected_count is not None and len(keep) != expected_count:
        raise WrongBlobCount(f"found {len(keep)} blobs, expected {expected_count}")

    rough = np.array(ndimage.center_of_mass(np.ones_like(img), labels, keep))
    rough = rough[:, ::-1]  # (row, col) -> (u, v)
    background = np.median(img)
    slices = ndimage.find_objects(labels)
    windows = []
    for label in keep:
        sl_v, sl_u = slices[label - 1]
        windows.append((max(sl_v.start - _WINDOW_GROW_PX, 0),
                        min(sl_v.stop + _WINDOW_GROW_PX, img.shape[0]),
                        max(sl_u.start - _WINDOW_GROW_PX, 0),
                        min(sl_u.stop + _WINDOW_GROW_PX, img.shape[1])))

    # Two refinement passes: the Voronoi assignment built from the rough
    # centroids can misplace the cell boundary by a tenth of a pixel, which
    # matters when a neighbouring blob's edge ends right at the midline.
    # Rebuilding the assignment from once-refined centroids removes that.
    centers = rough
    for _ in range(2):
        centers = _weighted_centroids(img, background, windows, centers)
    return centers


def _weighted_centroids(img, background, windows, centers) -> np.ndarray:
    """Darkness-weighted centroid per window, pixels assigned to the nearest
    of ``centers`` so neighbouring blobs cannot leak weight into a window."""
    refined = np.empty_like(centers)
    for i, (lo_v, hi_v, lo_u, hi_u) in enumerate(windows):
        window = img[lo_v:hi_v, lo_u:hi_u]
        uu, vv = np.meshgrid(np.arange(lo_u, hi_u, dtype=np.float64),
                             np.arange(lo_v, hi_v, dtype=np.float64))
        weight = np.clip(background - window, 0.0, None)
        d_own = (uu - centers[i, 0]) ** 2 + (vv - centers[i, 1]) ** 2
        for j in range(len(centers)):
            if j != i:
                d_other = (uu - centers[j, 0]) ** 2 + (vv - centers[j, 1]) ** 2
                weight[d_other < d_own] = 0.0
        total = weight.sum()
        if total <= 0:
            refined[i] = centers[i]
            continue
        refined[i, 0] = (weight * uu).sum() / total
        refined[i, 1] = (weight * vv).sum() / total
    return refined


def _hull_corners(pts: np.ndarray) -> np.ndarray:
    """The 4 convex-hull vertices spanning the largest quadrilateral."""
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise AmbiguousGrid(f"centroids are degenerate: {exc}") from exc
    verts = hull.vertices  # counterclockwise
    if len(verts) < 4:
        raise AmbiguousGrid("centroid hull has fewer than 4 corners")
    best_area, best = -1.0, None
    for quad in combinations(verts, 4):
        q = pts[list(quad)]
        area = 0.5 * abs(np.dot(q[:, 0], np.roll(q[:, 1], -1))
                         - np.dot(q[:, 1], np.roll(q[:, 0], -1)))
        if area > best_area:
            best_area, best = area, np.array(quad)
    return best


def _quad_homography(quad_px: np.ndarray, quad_uv: np.ndarray) -> np.ndarray:
    """Exact homography taking 4 pixel corners to 4 lattice corners."""
    a = np.zeros((8, 8))
    rhs = np.empty(8)
    for i, ((x, y), (u, v)) in enumerate(zip(quad_px, quad_uv)):
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]
        rhs[2 * i] = u
        rhs[2 * i + 1] = v
    h = np.linalg.solve(a, rhs)
    return np.array([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])


def _cell_assignment(pts: np.ndarray, corners: np.ndarray, quad_uv: np.ndarray,
                     rows: int, cols: int):
    """Map points through the corner homography and snap to lattice cells.

    Returns an index array ordering ``pts`` row-major, or None when the
    snapped cells are out of bounds or not one-to-one.
    """
    try:
        H = _quad_homography(pts[corners], quad_uv)
    except np.linalg.LinAlgError:
        return None
    w = np.column_stack([pts, np.ones(len(pts))]) @ H.T
    if np.any(np.abs(w[:, 2]) < 1e-12):
        return None
    uv = w[:, :2] / w[:, 2:3]
    cells = np.rint(uv).astype(int)
    if (cells[:, 0].min() < 0 or cells[:, 0].max() >= cols
            or cells[:, 1].min() < 0 or cells[:, 1].max() >= rows):
        return None
    flat = cells[:, 1] * cols + cells[:, 0]
    if len(np.unique(flat)) != rows * cols:
        return None
    order = np.empty(rows * cols, dtype=int)
    order[flat] = np.arange(len(pts))
    return order


def order_grid(centroids, rows: int, cols: int) -> np.ndarray:
    """Order centroids into row-major lattice order, shape (rows*cols, 2).

    The four extreme corners of the centroid hull are mapped to the lattice
    corners by an exact homography, which rectifies perspective before
    points are snapped to integer cells. All corner assignments that yield
    a one-to-one snap are equivalent up to grid symmetry; the variant whose
    first point minimizes pixel u + v wins. Raises AmbiguousGrid when no
    assignment works; a count mismatch is a caller error.
    """
    pts = check_array(centroids, "centroids", shape=(None, 2),
                      dtype_kind="uif").astype(np.float64)
    if rows < 2 or cols < 2:
        raise ValueError("grid ordering needs at least 2x2")
    if len(pts) != rows * cols:
        raise ValueError(f"got {len(pts)} centroids for a {rows}x{cols} grid")

    corners = _hull_corners(pts)
    lattice = np.array([[0, 0], [cols - 1, 0], [cols - 1, rows - 1],
                        [0, rows - 1]], dtype=np.float64)
    best = None
    for direction in (1, -1):
        cycle = corners[::direction]
        for shift in range(4):
            order = _cell_assignment(pts, np.roll(cycle, shift), lattice,
                                     rows, cols)
            if order is None:
                continue
            first = pts[order[0]]
            key = first[0] + first[1]
            if best is None or key < best[0] - 1e-12:
                best = (key, order)
    if best is None:
        raise AmbiguousGrid(
            f"centroids do not rectify to a {rows}x{cols} lattice")
    return pts[best[1]]


def detect_grid(image, rows: int, cols: int, pitch_m: float,
                camera_id: str = "", view_id: str = "") -> GridObservation:
    """Detect, order, and pair the hole grid in one camera image."""
    centroids = detect_blobs(image, expected_count=rows * cols)
    ordered = order_grid(centroids, rows, cols)
    return GridObservation(camera_id=camera_id, view_id=view_id,
                           image_points=ordered,
                           object_points=lattice_points(rows, cols, pitch_m))
