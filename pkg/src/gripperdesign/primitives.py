"""Fit segments with a cylinder and an oriented box; pick the gripper type.

A cylinder implies a 3-finger centric gripper with opening width equal to
its diameter; a box implies a 2-finger parallel gripper across an opposing
pair of occupied faces. The fit whose volume is closest to the segment's
convex-hull volume wins, but only among fits whose graspable surface
actually carries geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .geometry import perpendicular, rotation_about_axis, unit
from .mesh import TriangleMesh, convex_hull_vertices, convex_hull_volume

TWO_FINGER = "two_finger_parallel"
THREE_FINGER = "three_finger_centric"

_MIN_RANSAC_POINTS = 50
_NO_FIT_INLIER_FRACTION = 0.25
_LATERAL_MIN_INLIER_FRACTION = 0.4
_LATERAL_ANGULAR_BINS = 32
_LATERAL_MIN_COVERAGE_DEG = 270.0
_MIN_RADIUS_MM = 0.1


def sample_surface_points(mesh: TriangleMesh, n: int, seed: int = 0,
                          face_indices=None) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted random surface samples with face normals attached."""
    faces = np.arange(len(mesh.faces)) if face_indices is None \
        else np.asarray(face_indices, dtype=np.int64)
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas[faces]
    chosen = faces[rng.choice(len(faces), size=n, p=areas / areas.sum())]
    tri = mesh.triangles[chosen]
    r1 = np.sqrt(rng.uniform(size=n))[:, None]
    r2 = rng.uniform(size=n)[:, None]
    pts = (1 - r1) * tri[:, 0] + r1 * (1 - r2) * tri[:, 1] + r1 * r2 * tri[:, 2]
    return pts, mesh.face_normals[chosen].copy()


# ---------------------------------------------------------------------------
# Cylinder
# ---------------------------------------------------------------------------

@dataclass
class FittedCylinder:
    axis_point: np.ndarray      # midpoint of the inlier span, on the axis
    axis_dir: np.ndarray        # unit, sign-canonicalized
    radius: float
    height: float               # max - min inlier projection onto the axis
    inlier_fraction: float
    lateral_surface_nonempty: bool

    @property
    def volume(self) -> float:
        return float(np.pi * self.radius ** 2 * self.height)


def _cylinder_distances(points, axis_point, axis_dir, radius):
    rel = points - axis_point
    along = rel @ axis_dir
    radial = rel - np.outer(along, axis_dir)
    return np.abs(np.linalg.norm(radial, axis=1) - radius)


def _model_from_pair(p1, n1, p2, n2):
    axis = np.cross(n1, n2)
    norm = np.linalg.norm(axis)
    if norm < 1e-6:
        return None
    axis = axis / norm
    # project both surface lines into the plane normal to the axis; their
    # intersection is the axis footprint
    u = perpendicular(axis)
    v = np.cross(axis, u)
    to2d = np.stack([u, v])
    q1, q2 = to2d @ p1, to2d @ p2
    d1, d2 = to2d @ n1, to2d @ n2
    mat = np.column_stack([d1, -d2])
    det = np.linalg.det(mat)
    if abs(det) < 1e-9:
        return None
    s, _ = np.linalg.solve(mat, q2 - q1)
    center2d = q1 + s * d1
    radius = float(np.linalg.norm(q1 - center2d))
    axis_point = center2d[0] * u + center2d[1] * v
    return axis_point, axis, radius


def _refine_cylinder(points, normals, inliers, distance_tol):
    """Axis from the normals' smallest covariance direction, then a circle fit."""
    for _ in range(3):
        nin = normals[inliers]
        pin = points[inliers]
        cov = nin.T @ nin
        _, eigvecs = np.linalg.eigh(cov)
        axis = unit(eigvecs[:, 0])
        u = perpendicular(axis)
        v = np.cross(axis, u)
        q = np.column_stack([pin @ u, pin @ v])
        # algebraic circle fit: x^2 + y^2 + a x + b y + c = 0
        a_mat = np.column_stack([q, np.ones(len(q))])
        rhs = -(q ** 2).sum(axis=1)
        sol, *_ = np.linalg.lstsq(a_mat, rhs, rcond=None)
        cx, cy = -sol[0] / 2.0, -sol[1] / 2.0
        r2 = cx * cx + cy * cy - sol[2]
        if r2 <= 0:
            return None
        radius = float(np.sqrt(r2))
        axis_point = cx * u + cy * v
        new_inliers = _cylinder_distances(points, axis_point, axis, radius) <= distance_tol
        if new_inliers.sum() < 3:
            return None
        if np.array_equal(new_inliers, inliers):
            inliers = new_inliers
            break
        inliers = new_inliers
    return axis_point, axis, radius, inliers


def _lateral_nonempty(points, normals, axis_point, axis, inliers, fraction):
    if fraction < _LATERAL_MIN_INLIER_FRACTION:
        return False
    u = perpendicular(axis)
    v = np.cross(axis, u)
    rel = points[inliers] - axis_point
    radial = rel - np.outer(rel @ axis, axis)
    # an inward-closing centric gripper can only grasp outward-facing walls,
    # not a bore whose surface normals point at the axis
    outward = np.einsum("ij,ij->i", radial, normals[inliers])
    if np.mean(outward > 0) < 0.5:
        return False
    ang = np.arctan2(rel @ v, rel @ u)
    bins = np.unique(((ang + np.pi) / (2 * np.pi) * _LATERAL_ANGULAR_BINS)
                     .astype(int).clip(0, _LATERAL_ANGULAR_BINS - 1))
    needed = int(np.ceil(_LATERAL_MIN_COVERAGE_DEG / 360.0 * _LATERAL_ANGULAR_BINS))
    return len(bins) >= needed


def fit_cylinder_ransac(points: np.ndarray, normals: np.ndarray,
                        distance_tol: float = 0.5, max_iters: int = 500,
                        seed: int = 0) -> FittedCylinder | None:
    """Two point-plus-normal RANSAC with eigen/least-squares refinement.

    Returns None when the best model keeps under 25% of the points within
    ``distance_tol`` of its lateral surface.
    """
    points = np.asarray(points, dtype=float)
    normals = np.asarray(normals, dtype=float)
    if len(points) < _MIN_RANSAC_POINTS:
        raise DegenerateInputError(
            f"cylinder fit needs >= {_MIN_RANSAC_POINTS} points, got {len(points)}")
    n = len(points)
    diag = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
    max_radius = 10.0 * diag
    rng = np.random.default_rng(seed)
    best_count = 0
    best_inliers = None
    for _ in range(max_iters):
        i, j = rng.integers(n), rng.integers(n)
        if i == j:
            continue
        model = _model_from_pair(points[i], normals[i], points[j], normals[j])
        if model is None:
            continue
        axis_point, axis, radius = model
        if not _MIN_RADIUS_MM <= radius <= max_radius:
            continue
        inliers = _cylinder_distances(points, axis_point, axis, radius) <= distance_tol
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None or best_count < max(3, int(_NO_FIT_INLIER_FRACTION * n)):
        return None
    refined = _refine_cylinder(points, normals, best_inliers, distance_tol)
    if refined is None:
        return None
    axis_point, axis, radius, inliers = refined
    fraction = float(inliers.mean())
    if fraction < _NO_FIT_INLIER_FRACTION or not _MIN_RADIUS_MM <= radius <= max_radius:
        return None
    along = (points[inliers] - axis_point) @ axis
    height = float(along.max() - along.min())
    mid = axis_point + axis * float(along.max() + along.min()) / 2.0
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    return FittedCylinder(mid, axis, radius, height, fraction,
                          _lateral_nonempty(points, normals, axis_point, axis,
                                            inliers, fraction))


# ---------------------------------------------------------------------------
# Oriented box
# ---------------------------------------------------------------------------

@dataclass
class FittedBox:
    center: np.ndarray
    axes: np.ndarray            # rows are unit axes, right-handed
    half_extents: np.ndarray
    face_nonempty: np.ndarray | None = None  # (+a0,-a0,+a1,-a1,+a2,-a2)

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def contains(self, points: np.ndarray, slack: float = 1e-6) -> np.ndarray:
        local = (np.atleast_2d(points) - self.center) @ self.axes.T
        return np.all(np.abs(local) <= self.half_extents + slack, axis=1)


def _box_from_axes(points: np.ndarray, axes: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    proj = points @ axes.T
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    half = (hi - lo) / 2.0
    center = ((lo + hi) / 2.0) @ axes
    return center, half, float(np.prod(hi - lo))


def fit_oriented_box(points: np.ndarray) -> FittedBox:
    """PCA axes of the hull vertices, refined by a local rotation search.

    The refinement scans +-45 degrees in 1 degree steps around each current
    axis and keeps the minimum volume; the window is wide enough to recover
    from PCA landing diagonally (e.g. on an L-shaped part) without paying
    for an exact minimal-box search.
    """
    points = np.asarray(points, dtype=float)
    hull_pts = convex_hull_vertices(points)  # raises DegenerateInputError
    centered = hull_pts - hull_pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt
    _, _, best_vol = _box_from_axes(hull_pts, axes)
    deltas = np.deg2rad(np.arange(-45.0, 45.5, 1.0))
    for _ in range(2):
        improved = False
        for k in range(3):
            for delta in deltas:
                if delta == 0.0:
                    continue
                rot = rotation_about_axis(axes[k], delta)
                cand = axes @ rot.T
                _, _, vol = _box_from_axes(hull_pts, cand)
                if vol < best_vol - 1e-12:
                    axes, best_vol = cand, vol
                    improved = True
        if not improved:
            break
    center, half, _ = _box_from_axes(hull_pts, axes)
    order = np.argsort(-half)
    axes = axes[order]
    half = half[order]
    for k in range(3):
        if axes[k][np.argmax(np.abs(axes[k]))] < 0:
            axes[k] = -axes[k]
    if np.linalg.det(axes) < 0:
        axes[2] = -axes[2]
    return FittedBox(center, axes, half)


def detect_box_face_emptiness(points: np.ndarray, box: FittedBox,
                              shell_tol: float, coverage_threshold: float = 0.3,
                              grid: int = 16) -> np.ndarray:
    """Occupancy flags for the 6 box faces, ordered (+a0,-a0,+a1,-a1,+a2,-a2).

    A face counts as non-empty when points within ``shell_tol`` of its plane
    fill at least ``coverage_threshold`` of a ``grid`` x ``grid`` occupancy
    raster over the face rectangle.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    local = (points - box.center) @ box.axes.T
    flags = np.zeros(6, dtype=bool)
    for k in range(3):
        u_axis, v_axis = [a for a in range(3) if a != k]
        hu, hv = box.half_extents[u_axis], box.half_extents[v_axis]
        for which, sign in ((2 * k, +1.0), (2 * k + 1, -1.0)):
            near = np.abs(local[:, k] - sign * box.half_extents[k]) <= shell_tol
            if not near.any():
                continue
            us = ((local[near, u_axis] + hu) / max(2 * hu, 1e-12) * grid)
            vs = ((local[near, v_axis] + hv) / max(2 * hv, 1e-12) * grid)
            iu = np.clip(us.astype(int), 0, grid - 1)
            iv = np.clip(vs.astype(int), 0, grid - 1)
            occupied = len(np.unique(iu * grid + iv))
            flags[which] = occupied >= coverage_threshold * grid * grid
    return flags


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------

@dataclass
class PrimitiveSelection:
    segment_index: int
    kind: str                       # "cylinder" | "box"
    gripper_type: str               # THREE_FINGER for cylinders, TWO_FINGER for boxes
    width: float                    # characteristic opening width, mm
    approach_axis: np.ndarray       # cylinder axis, or the chosen box face-pair axis
    cylinder: FittedCylinder | None
    box: FittedBox | None
    hull_volume: float
    primitive_volume: float
    box_pair_axis: int | None = None


def _graspable_box_axis(box: FittedBox) -> int | None:
    """Smallest-extent axis whose both faces carry geometry, if any."""
    if box.face_nonempty is None:
        return None
    candidates = [k for k in range(3)
                  if box.face_nonempty[2 * k] and box.face_nonempty[2 * k + 1]]
    if not candidates:
        return None
    return min(candidates, key=lambda k: box.half_extents[k])


def select_primitive(segment_points: np.ndarray, segment_index: int,
                     cylinder: FittedCylinder | None,
                     box: FittedBox | None) -> PrimitiveSelection | None:
    """Choose the candidate whose volume is closest to the segment hull volume.

    Candidates with an empty graspable surface are disqualified first; ties
    go to the cylinder (3-finger stability does not depend on the radius).
    Returns None when no candidate has a graspable surface.
    """
    try:
        hull_vol = convex_hull_volume(segment_points)
    except DegenerateInputError:
        return None
    candidates: list[tuple[float, int, PrimitiveSelection]] = []
    if cylinder is not None and cylinder.lateral_surface_nonempty:
        sel = PrimitiveSelection(segment_index, "cylinder", THREE_FINGER,
                                 2.0 * cylinder.radius, cylinder.axis_dir.copy(),
                                 cylinder, box, hull_vol, cylinder.volume)
        candidates.append((abs(cylinder.volume - hull_vol), 0, sel))
    if box is not None:
        axis_k = _graspable_box_axis(box)
        if axis_k is not None:
            sel = PrimitiveSelection(segment_index, "box", TWO_FINGER,
                                     2.0 * float(box.half_extents[axis_k]),
                                     box.axes[axis_k].copy(), cylinder, box,
                                     hull_vol, box.volume, box_pair_axis=axis_k)
            candidates.append((abs(box.volume - hull_vol), 1, sel))
    if not candidates:
        return None
    candidates.sort(key=lambda c: (c[0] - 1e-9 * (c[1] == 0), c[1]))
    return candidates[0][2]
