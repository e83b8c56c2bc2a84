"""Grasp candidate generation and the parametric gripper solid.

Two-finger grasps pinch anti-parallel planar facet pairs and rotate about
the contact normal; three-finger grasps align the tool axis with a fitted
cylinder's axis and slide along it. The gripper frame has its origin midway
between the fingertips, +z along the approach direction, and +x along the
closing direction for two-finger tools.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision import OrientedBox
from .geometry import perpendicular, rotation_about_axis, unit
from .mesh import TriangleMesh
from .primitives import THREE_FINGER, TWO_FINGER, FittedCylinder

_OVERLAP_GRID = 64


@dataclass
class PlanarFacet:
    face_indices: np.ndarray
    normal: np.ndarray          # area-weighted mean, unit
    point: np.ndarray           # area-weighted centroid
    area: float


@dataclass
class FacetPair:
    facet_a: int
    facet_b: int
    contact_a: np.ndarray
    contact_b: np.ndarray
    width: float

    @property
    def closing_axis(self) -> np.ndarray:
        return unit(self.contact_b - self.contact_a)


@dataclass
class GraspCandidate:
    gripper_type: str
    pose: np.ndarray            # 4x4, gripper frame -> component frame
    width: float                # commanded opening at contact, mm
    contacts: np.ndarray        # (2, 3) or (3, 3)
    depth: float = 0.0          # fingertip overtravel past the contacts, mm
    segment_index: int = -1


def planar_cluster(mesh: TriangleMesh, angle_tol_deg: float = 10.0,
                   face_indices=None) -> list[PlanarFacet]:
    """Region-grow faces into nearly planar facets.

    A neighbor joins a facet while its normal stays within the tolerance of
    the facet's running area-weighted mean normal. Growth order follows face
    indices, so the clustering is deterministic.
    """
    faces = np.arange(len(mesh.faces)) if face_indices is None \
        else np.asarray(face_indices, dtype=np.int64)
    in_set = np.zeros(len(mesh.faces), dtype=bool)
    in_set[faces] = True
    cos_tol = np.cos(np.deg2rad(angle_tol_deg))
    normals = mesh.face_normals
    areas = mesh.face_areas
    centroids = mesh.face_centroids
    adjacency = mesh.adjacency_lists
    assigned = np.zeros(len(mesh.faces), dtype=bool)
    facets: list[PlanarFacet] = []
    for seed in faces:
        if assigned[seed]:
            continue
        members = [int(seed)]
        assigned[seed] = True
        mean = normals[seed] * areas[seed]
        queue = [int(seed)]
        while queue:
            f = queue.pop(0)
            for g in adjacency[f]:
                if assigned[g] or not in_set[g]:
                    continue
                if np.dot(normals[g], unit(mean)) >= cos_tol:
                    assigned[g] = True
                    members.append(int(g))
                    mean = mean + normals[g] * areas[g]
                    queue.append(int(g))
        member_arr = np.array(sorted(members), dtype=np.int64)
        w = areas[member_arr]
        facets.append(PlanarFacet(
            member_arr, unit(mean),
            (centroids[member_arr] * w[:, None]).sum(axis=0) / w.sum(),
            float(w.sum())))
    return facets


def _rasterize(points_2d: np.ndarray, tris: np.ndarray, lo, hi,
               grid: int = _OVERLAP_GRID) -> np.ndarray:
    """Occupancy mask of triangles over a fixed grid (cell-center sampling)."""
    span = np.maximum(hi - lo, 1e-12)
    xs = lo[0] + (np.arange(grid) + 0.5) / grid * span[0]
    ys = lo[1] + (np.arange(grid) + 0.5) / grid * span[1]
    cx, cy = np.meshgrid(xs, ys, indexing="ij")
    cells = np.column_stack([cx.ravel(), cy.ravel()])
    mask = np.zeros(len(cells), dtype=bool)

    def cross_z(u, vx, vy):
        return u[0] * (vy - u[3]) - u[1] * (vx - u[2])

    for tri in tris:
        a, b, c = points_2d[tri]
        d1 = cross_z((b[0] - a[0], b[1] - a[1], a[0], a[1]), cells[:, 0], cells[:, 1])
        d2 = cross_z((c[0] - b[0], c[1] - b[1], b[0], b[1]), cells[:, 0], cells[:, 1])
        d3 = cross_z((a[0] - c[0], a[1] - c[1], c[0], c[1]), cells[:, 0], cells[:, 1])
        inside = ((d1 >= 0) & (d2 >= 0) & (d3 >= 0)) | ((d1 <= 0) & (d2 <= 0) & (d3 <= 0))
        mask |= inside
    return mask.reshape(grid, grid)


def find_parallel_facet_pairs(mesh: TriangleMesh, facets: list[PlanarFacet],
                              angle_tol_deg: float = 10.0,
                              min_area: float = 25.0,
                              max_width: float = 200.0) -> list[FacetPair]:
    """Anti-parallel facet pairs with overlapping material between them.

    Both facets are projected onto their common mid-plane; the pair is kept
    when the projections overlap, and the contact points are the overlap
    centroid pushed back onto each facet's plane.
    """
    cos_tol = np.cos(np.deg2rad(angle_tol_deg))
    pairs: list[FacetPair] = []
    for i in range(len(facets)):
        fi = facets[i]
        if fi.area < min_area:
            continue
        for j in range(i + 1, len(facets)):
            fj = facets[j]
            if fj.area < min_area:
                continue
            if np.dot(fi.normal, -fj.normal) < cos_tol:
                continue
            if np.dot(fj.point - fi.point, fi.normal) >= 0:
                continue  # facets must face away from the shared material
            n_mid = unit(fi.normal - fj.normal)
            separation = abs(np.dot(fj.point - fi.point, n_mid))
            if separation > max_width or separation < 1e-9:
                continue
            u = perpendicular(n_mid)
            v = np.cross(n_mid, u)
            basis = np.stack([u, v])
            verts2d = mesh.vertices @ basis.T
            tris_i = mesh.faces[fi.face_indices]
            tris_j = mesh.faces[fj.face_indices]
            used = np.concatenate([tris_i.ravel(), tris_j.ravel()])
            lo = verts2d[used].min(axis=0)
            hi = verts2d[used].max(axis=0)
            mask = (_rasterize(verts2d, tris_i, lo, hi)
                    & _rasterize(verts2d, tris_j, lo, hi))
            if not mask.any():
                continue
            grid = mask.shape[0]
            iu, iv = np.nonzero(mask)
            span = np.maximum(hi - lo, 1e-12)
            # centroid of the overlap cells; for a nonconvex overlap (L-shaped
            # material) it can land outside, so snap to the nearest filled cell
            cu, cv = iu.mean(), iv.mean()
            if not mask[int(round(cu)) % grid, int(round(cv)) % grid]:
                nearest = np.argmin((iu - cu) ** 2 + (iv - cv) ** 2)
                cu, cv = float(iu[nearest]), float(iv[nearest])
            centroid2d = np.array([
                lo[0] + (cu + 0.5) / grid * span[0],
                lo[1] + (cv + 0.5) / grid * span[1]])
            q = centroid2d[0] * u + centroid2d[1] * v
            contacts = []
            ok = True
            for facet in (fi, fj):
                denom = float(np.dot(n_mid, facet.normal))
                if abs(denom) < 1e-9:
                    ok = False
                    break
                s = float(np.dot(facet.point - q, facet.normal)) / denom
                contacts.append(q + s * n_mid)
            if not ok:
                continue
            width = float(np.linalg.norm(contacts[1] - contacts[0]))
            if width > max_width or width < 1e-9:
                continue
            pairs.append(FacetPair(i, j, contacts[0], contacts[1], width))
    return pairs


def generate_two_finger_grasps(pair: FacetPair, n_rotations: int = 12,
                               depths=(2.0, 5.0, 8.0)) -> list[GraspCandidate]:
    """Rotation ladder about the contact normal at several fingertip depths."""
    x = pair.closing_axis
    mid = 0.5 * (pair.contact_a + pair.contact_b)
    z0 = perpendicular(x)
    out: list[GraspCandidate] = []
    for r in range(n_rotations):
        rot = rotation_about_axis(x, 2.0 * np.pi * r / n_rotations)
        z = rot @ z0
        y = np.cross(z, x)
        for depth in depths:
            pose = np.eye(4)
            pose[:3, 0], pose[:3, 1], pose[:3, 2] = x, y, z
            pose[:3, 3] = mid + depth * z
            out.append(GraspCandidate(TWO_FINGER, pose, pair.width,
                                      np.stack([pair.contact_a, pair.contact_b]),
                                      depth=float(depth)))
    return out


def generate_three_finger_grasps(cyl: FittedCylinder, n_rotations: int = 12,
                                 n_axial: int = 3,
                                 axial_margin: float = 0.1) -> list[GraspCandidate]:
    """Axis-aligned centric grasps, both approach directions.

    Contacts sit on the lateral surface at the fingertip plane, equally
    spaced 120 degrees apart; stations cover the inlier height span with a
    relative margin at both ends.
    """
    a = unit(cyl.axis_dir)
    u0 = perpendicular(a)
    v0 = np.cross(a, u0)
    half = cyl.height / 2.0
    lo, hi = -half + axial_margin * cyl.height, half - axial_margin * cyl.height
    stations = [0.5 * (lo + hi)] if n_axial == 1 else np.linspace(lo, hi, n_axial)
    out: list[GraspCandidate] = []
    for approach_sign in (-1.0, +1.0):
        z = -approach_sign * a  # approach travels opposite the chosen axis end
        for r in range(n_rotations):
            angle = 2.0 * np.pi * r / n_rotations
            x = np.cos(angle) * u0 + np.sin(angle) * v0
            y = np.cross(z, x)
            for t in stations:
                origin = cyl.axis_point + t * a
                pose = np.eye(4)
                pose[:3, 0], pose[:3, 1], pose[:3, 2] = x, y, z
                pose[:3, 3] = origin
                contacts = np.stack([
                    origin + cyl.radius * (np.cos(angle + k * 2 * np.pi / 3) * u0
                                           + np.sin(angle + k * 2 * np.pi / 3) * v0)
                    for k in range(3)])
                out.append(GraspCandidate(THREE_FINGER, pose, 2.0 * cyl.radius,
                                          contacts))
    return out


# ---------------------------------------------------------------------------
# Gripper solid
# ---------------------------------------------------------------------------

@dataclass
class GripperGeometry:
    finger_thickness: float = 8.0   # radial / closing-direction size, mm
    finger_width: float = 8.0       # tangential size, mm
    palm_size: tuple[float, float, float] = (60.0, 60.0, 20.0)


@dataclass
class GripperSolid:
    gripper_type: str
    width: float
    finger_length: float
    boxes: list[OrientedBox] = field(default_factory=list)

    def posed(self, pose: np.ndarray) -> list[OrientedBox]:
        return [b.transformed(pose) for b in self.boxes]


def build_gripper_solid(gripper_type: str, width: float, finger_length: float,
                        geometry: GripperGeometry | None = None) -> GripperSolid:
    """Palm box plus finger boxes at the commanded opening, in the gripper frame.

    Fingertips lie at z = 0, fingers span z in [-L, 0], the palm sits behind
    them. Two-finger inner faces are ``width`` apart along x; three-finger
    inner faces are tangent to the circle of radius ``width / 2``.
    """
    if width < 0:
        raise ValueError("width must be >= 0")
    if finger_length <= 0:
        raise ValueError("finger_length must be > 0")
    geom = geometry or GripperGeometry()
    th, fw = geom.finger_thickness, geom.finger_width
    pw, pd, ph = geom.palm_size
    length = float(finger_length)
    solid = GripperSolid(gripper_type, float(width), length)
    palm_center = np.array([0.0, 0.0, -length - ph / 2.0])
    solid.boxes.append(OrientedBox(palm_center, np.eye(3),
                                   [pw / 2.0, pd / 2.0, ph / 2.0]))
    if gripper_type == TWO_FINGER:
        for sign in (+1.0, -1.0):
            center = np.array([sign * (width / 2.0 + th / 2.0), 0.0, -length / 2.0])
            solid.boxes.append(OrientedBox(center, np.eye(3),
                                           [th / 2.0, fw / 2.0, length / 2.0]))
    elif gripper_type == THREE_FINGER:
        for k in range(3):
            angle = 2.0 * np.pi * k / 3.0
            radial = np.array([np.cos(angle), np.sin(angle), 0.0])
            tangent = np.array([-np.sin(angle), np.cos(angle), 0.0])
            center = (width / 2.0 + th / 2.0) * radial + np.array([0, 0, -length / 2.0])
            axes = np.stack([radial, tangent, [0.0, 0.0, 1.0]])
            solid.boxes.append(OrientedBox(center, axes,
                                           [th / 2.0, fw / 2.0, length / 2.0]))
    else:
        raise ValueError(f"unknown gripper type '{gripper_type}'")
    return solid


def contact_local_coordinates(candidate: GraspCandidate) -> np.ndarray:
    """Contacts expressed in the gripper frame (used by consistency checks)."""
    pose = candidate.pose
    rel = candidate.contacts - pose[:3, 3]
    return rel @ pose[:3, :3]


def filter_segment_contact_faces(mesh: TriangleMesh, candidate: GraspCandidate,
                                 shell_tol: float) -> np.ndarray:
    """Faces of the grasped segment that do NOT touch the finger inner surfaces.

    Finger contact with the segment being grasped is intended, not a
    collision; callers that include the segment among the obstacles should
    drop the faces this function filters out.
    """
    pose = candidate.pose
    local = (mesh.face_centroids - pose[:3, 3]) @ pose[:3, :3]
    half = candidate.width / 2.0
    if candidate.gripper_type == TWO_FINGER:
        near = np.abs(np.abs(local[:, 0]) - half) <= shell_tol
    else:
        radial = np.linalg.norm(local[:, :2], axis=1)
        near = np.abs(radial - half) <= shell_tol
    return np.flatnonzero(~near)
