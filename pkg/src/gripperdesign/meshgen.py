"""Parametric triangle-mesh generators for fixtures and synthetic tasks.

Conventions: solids of revolution have their axis along +z with the base at
z = 0; boxes are centered unless a center is given. All outputs are welded
TriangleMeshes in millimetres.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh, _weld_and_clean

_FACE_AXES = {"+x": (0, +1), "-x": (0, -1), "+y": (1, +1),
              "-y": (1, -1), "+z": (2, +1), "-z": (2, -1)}


def _mesh_from_soup(vertices: np.ndarray, faces: np.ndarray) -> TriangleMesh:
    verts, faces, _ = _weld_and_clean(np.asarray(vertices, float),
                                      np.asarray(faces, np.int64))
    return TriangleMesh(verts, faces)


def make_box(extents, center=(0.0, 0.0, 0.0), resolution: int = 1,
             open_faces: tuple[str, ...] = ()) -> TriangleMesh:
    """Closed box surface with ``resolution`` x ``resolution`` cells per face.

    ``open_faces`` names faces to omit (e.g. ("+z",) for an open-top box).
    """
    ex, ey, ez = (float(e) / 2.0 for e in extents)
    half = np.array([ex, ey, ez])
    center = np.asarray(center, dtype=float)
    res = max(1, int(resolution))
    verts: list[np.ndarray] = []
    faces: list[list[int]] = []
    for name, (axis, sign) in _FACE_AXES.items():
        if name in open_faces:
            continue
        u_axis, v_axis = [a for a in range(3) if a != axis]
        wind = sign
        if (u_axis, v_axis, axis) not in ((1, 2, 0), (2, 0, 1), (0, 1, 2)):
            wind = -wind  # odd permutation: flip winding to keep normals outward
        us = np.linspace(-half[u_axis], half[u_axis], res + 1)
        vs = np.linspace(-half[v_axis], half[v_axis], res + 1)
        base = len(verts)
        for u in us:
            for v in vs:
                p = np.zeros(3)
                p[axis] = sign * half[axis]
                p[u_axis] = u
                p[v_axis] = v
                verts.append(p + center)
        for i in range(res):
            for j in range(res):
                a = base + i * (res + 1) + j
                b = a + res + 1
                if wind > 0:
                    faces += [[a, b, a + 1], [a + 1, b, b + 1]]
                else:
                    faces += [[a, a + 1, b], [a + 1, b + 1, b]]
    return _mesh_from_soup(np.array(verts), np.array(faces))


def _lathe(profile_z: np.ndarray, profile_r: np.ndarray, n_sides: int,
           bottom_cap: bool = True, top_cap: bool = True) -> TriangleMesh:
    """Surface of revolution around +z through (r_k, z_k) profile rings."""
    angles = np.linspace(0.0, 2.0 * np.pi, n_sides, endpoint=False)
    cos, sin = np.cos(angles), np.sin(angles)
    verts: list[np.ndarray] = []
    ring_start: list[int] = []
    for z, r in zip(profile_z, profile_r):
        ring_start.append(len(verts))
        for c, s in zip(cos, sin):
            verts.append(np.array([r * c, r * s, z]))
    faces: list[list[int]] = []
    for k in range(len(profile_z) - 1):
        a0, b0 = ring_start[k], ring_start[k + 1]
        for i in range(n_sides):
            j = (i + 1) % n_sides
            # outward winding (CCW seen from outside)
            faces += [[a0 + i, a0 + j, b0 + i], [a0 + j, b0 + j, b0 + i]]
    if bottom_cap and profile_r[0] > 0:
        apex = len(verts)
        verts.append(np.array([0.0, 0.0, profile_z[0]]))
        s = ring_start[0]
        for i in range(n_sides):
            faces.append([apex, s + (i + 1) % n_sides, s + i])
    if top_cap and profile_r[-1] > 0:
        apex = len(verts)
        verts.append(np.array([0.0, 0.0, profile_z[-1]]))
        s = ring_start[-1]
        for i in range(n_sides):
            faces.append([apex, s + i, s + (i + 1) % n_sides])
    return _mesh_from_soup(np.array(verts), np.array(faces))


def make_cylinder(radius: float, height: float, n_sides: int = 64,
                  n_height: int = 1, caps: bool = True) -> TriangleMesh:
    zs = np.linspace(0.0, height, n_height + 1)
    rs = np.full(n_height + 1, float(radius))
    return _lathe(zs, rs, n_sides, bottom_cap=caps, top_cap=caps)


def make_stepped_cylinder(steps: list[tuple[float, float]], n_sides: int = 48,
                          ring_height: float | None = None) -> TriangleMesh:
    """Coaxial stacked cylinders [(radius, height), ...] closed with caps.

    Radius changes produce annular shoulder rings; ``ring_height`` bounds the
    axial size of lateral cells (defaults to one cell per step).
    """
    profile_z: list[float] = []
    profile_r: list[float] = []
    z = 0.0
    for radius, height in steps:
        n_cells = 1 if ring_height is None else max(1, int(np.ceil(height / ring_height)))
        if profile_z and profile_r[-1] != radius:
            profile_z.append(z)  # duplicate z: shoulder annulus between radii
            profile_r.append(radius)
        elif not profile_z:
            profile_z.append(z)
            profile_r.append(radius)
        for k in range(1, n_cells + 1):
            profile_z.append(z + height * k / n_cells)
            profile_r.append(radius)
        z += height
    return _lathe(np.array(profile_z), np.array(profile_r), n_sides)


def make_tube(outer_radius: float, inner_radius: float, height: float,
              n_sides: int = 64) -> TriangleMesh:
    """Closed tube / annular ring: outer and inner walls plus flat annuli."""
    if not 0.0 < inner_radius < outer_radius:
        raise ValueError("need 0 < inner_radius < outer_radius")
    zs = [0.0, height, height, 0.0, 0.0]
    rs = [outer_radius, outer_radius, inner_radius, inner_radius, outer_radius]
    return _lathe(np.array(zs), np.array(rs), n_sides,
                  bottom_cap=False, top_cap=False)


def make_threaded_cylinder(radius: float, height: float, n_sides: int = 48,
                           n_rings: int = 40, amplitude: float = 0.5) -> TriangleMesh:
    """Cylinder with a saw-tooth radial profile, a stand-in for a screw thread."""
    zs = np.linspace(0.0, height, n_rings + 1)
    saw = 2.0 * np.abs(np.arange(n_rings + 1) % 4 / 4.0 - 0.5)
    rs = radius + amplitude * (2.0 * saw - 1.0)
    rs[0] = rs[-1] = radius
    return _lathe(zs, rs, n_sides)


def make_sphere(radius: float, subdivisions: int = 3) -> TriangleMesh:
    """Icosphere: icosahedron subdivided and projected onto the sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1]], dtype=float)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]], dtype=np.int64)
    for _ in range(subdivisions):
        tri = verts[faces]
        mid01 = 0.5 * (tri[:, 0] + tri[:, 1])
        mid12 = 0.5 * (tri[:, 1] + tri[:, 2])
        mid20 = 0.5 * (tri[:, 2] + tri[:, 0])
        n = len(faces)
        base = len(verts)
        verts = np.vstack([verts, mid01, mid12, mid20])
        i01 = base + np.arange(n)
        i12 = base + n + np.arange(n)
        i20 = base + 2 * n + np.arange(n)
        faces = np.vstack([
            np.column_stack([faces[:, 0], i01, i20]),
            np.column_stack([faces[:, 1], i12, i01]),
            np.column_stack([faces[:, 2], i20, i12]),
            np.column_stack([i01, i12, i20])])
        # re-weld the shared edge midpoints before the next round
        verts, faces, _ = _weld_and_clean(verts, faces, tol=1e-9)
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True) * radius
    return _mesh_from_soup(verts, faces)


def _ear_clip(polygon: np.ndarray) -> list[list[int]]:
    """Triangulate a simple CCW polygon by ear clipping."""
    idx = list(range(len(polygon)))
    tris: list[list[int]] = []

    def cross(o, a, b):
        return ((polygon[a][0] - polygon[o][0]) * (polygon[b][1] - polygon[o][1])
                - (polygon[a][1] - polygon[o][1]) * (polygon[b][0] - polygon[o][0]))

    def inside(p, a, b, c):
        d1 = cross(a, b, p)
        d2 = cross(b, c, p)
        d3 = cross(c, a, p)
        return d1 >= -1e-12 and d2 >= -1e-12 and d3 >= -1e-12

    guard = 0
    while len(idx) > 3 and guard < 10000:
        guard += 1
        for k in range(len(idx)):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            if cross(a, b, c) <= 1e-12:
                continue
            if any(inside(p, a, b, c) for p in idx if p not in (a, b, c)):
                continue
            tris.append([a, b, c])
            idx.pop(k)
            break
        else:
            break
    if len(idx) == 3:
        tris.append(list(idx))
    return tris


def make_prism(polygon_2d, height: float) -> TriangleMesh:
    """Extrude a simple CCW polygon (in xy) along +z, capped at both ends."""
    poly = np.asarray(polygon_2d, dtype=float)
    n = len(poly)
    bottom = np.column_stack([poly, np.zeros(n)])
    top = np.column_stack([poly, np.full(n, float(height))])
    verts = np.vstack([bottom, top])
    faces: list[list[int]] = []
    for i in range(n):
        j = (i + 1) % n
        faces += [[i, j, n + i], [j, n + j, n + i]]
    for a, b, c in _ear_clip(poly):
        faces.append([a, c, b])          # bottom cap, normal -z
        faces.append([n + a, n + b, n + c])  # top cap, normal +z
    return _mesh_from_soup(verts, np.array(faces))


def make_l_block(leg: float = 30.0, width: float = 10.0,
                 height: float = 10.0) -> TriangleMesh:
    poly = [(0, 0), (leg, 0), (leg, width), (width, width), (width, leg), (0, leg)]
    return make_prism(poly, height)


def make_tub(cavity_half_width: float, wall_height: float,
             wall_thickness: float = 5.0, floor_thickness: float = 5.0,
             closed_top: bool = False, resolution: int = 2) -> TriangleMesh:
    """Square open-top housing built from solid slabs (floor plus 4 walls).

    The cavity spans +-cavity_half_width in x/y with its floor top at z = 0.
    ``closed_top`` adds a lid, making the cavity fully enclosed.
    """
    c, t, h = cavity_half_width, wall_thickness, wall_height
    outer = c + t
    parts = [make_box((2 * outer, 2 * outer, floor_thickness),
                      center=(0, 0, -floor_thickness / 2), resolution=resolution)]
    for sign in (+1, -1):
        parts.append(make_box((t, 2 * outer, h),
                              center=(sign * (c + t / 2), 0, h / 2),
                              resolution=resolution))
        parts.append(make_box((2 * c, t, h),
                              center=(0, sign * (c + t / 2), h / 2),
                              resolution=resolution))
    if closed_top:
        parts.append(make_box((2 * outer, 2 * outer, floor_thickness),
                              center=(0, 0, h + floor_thickness / 2),
                              resolution=resolution))
    mesh = parts[0]
    for part in parts[1:]:
        mesh = mesh.merged(part)
    return mesh
