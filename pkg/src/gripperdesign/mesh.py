"""Triangle mesh container, file I/O, smoothing, and hull volume.

Meshes are indexed triangle sets in millimetres. Loaders weld duplicate
vertices (1e-6 mm grid) and drop degenerate faces, because exported CAD
meshes routinely contain both; the dropped count is kept on the mesh.
"""

from __future__ import annotations

import struct
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateInputError, MalformedGeometryError, MeshLoadError

WELD_TOLERANCE_MM = 1e-6
DEGENERATE_AREA_MM2 = 1e-12


class TriangleMesh:
    """Immutable indexed triangle set with derived normals and adjacency.

    Invariants enforced at construction: face indices in range, three
    distinct vertices per face, face area above ``DEGENERATE_AREA_MM2``,
    finite coordinates.
    """

    def __init__(self, vertices, faces, dropped_degenerate_faces: int = 0):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MalformedGeometryError("vertices must be an (n, 3) array")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MalformedGeometryError("faces must be an (m, 3) array")
        if faces.shape[0] == 0:
            raise MalformedGeometryError("mesh has no faces")
        if not np.all(np.isfinite(vertices)):
            raise MalformedGeometryError("non-finite vertex coordinates")
        if faces.min() < 0 or faces.max() >= len(vertices):
            raise MalformedGeometryError("face index out of range")
        if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) \
                or np.any(faces[:, 0] == faces[:, 2]):
            raise MalformedGeometryError("face with repeated vertex index")
        tri = vertices[faces]
        areas = 0.5 * np.linalg.norm(
            np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        if np.any(areas <= DEGENERATE_AREA_MM2):
            raise MalformedGeometryError("degenerate (zero-area) face present")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        self.vertices = vertices
        self.faces = faces
        self.dropped_degenerate_faces = int(dropped_degenerate_faces)

    # -- derived quantities (cached, mesh is immutable) --

    @cached_property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @cached_property
    def face_areas(self) -> np.ndarray:
        tri = self.triangles
        return 0.5 * np.linalg.norm(
            np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        tri = self.triangles
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def face_centroids(self) -> np.ndarray:
        return self.triangles.mean(axis=1)

    @cached_property
    def edge_map(self) -> dict[tuple[int, int], list[int]]:
        """Sorted vertex pair -> list of incident face indices."""
        edges: dict[tuple[int, int], list[int]] = {}
        for fi, (a, b, c) in enumerate(self.faces):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                edges.setdefault(key, []).append(fi)
        return edges

    @cached_property
    def face_adjacency(self) -> np.ndarray:
        """(E, 2) array of face index pairs sharing an edge, each pair once."""
        pairs = set()
        for faces in self.edge_map.values():
            for i in range(len(faces)):
                for j in range(i + 1, len(faces)):
                    a, b = faces[i], faces[j]
                    pairs.add((a, b) if a < b else (b, a))
        if not pairs:
            return np.empty((0, 2), dtype=np.int64)
        return np.array(sorted(pairs), dtype=np.int64)

    @cached_property
    def adjacency_lists(self) -> list[list[int]]:
        lists: list[list[int]] = [[] for _ in range(len(self.faces))]
        for a, b in self.face_adjacency:
            lists[a].append(int(b))
            lists[b].append(int(a))
        return lists

    @cached_property
    def vertex_neighbors(self) -> list[np.ndarray]:
        nbrs: list[set[int]] = [set() for _ in range(len(self.vertices))]
        for key in self.edge_map:
            u, v = key
            nbrs[u].add(v)
            nbrs[v].add(u)
        return [np.fromiter(sorted(s), dtype=np.int64) for s in nbrs]

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def bbox_diagonal(self) -> float:
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    def transformed(self, t: np.ndarray) -> "TriangleMesh":
        verts = self.vertices @ t[:3, :3].T + t[:3, 3]
        return TriangleMesh(verts, self.faces)

    def scaled(self, factor: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * float(factor), self.faces)

    def submesh(self, face_indices) -> tuple["TriangleMesh", np.ndarray]:
        """Extract the given faces with reindexed vertices.

        Returns the submesh and the parent face index for each new face.
        """
        face_indices = np.asarray(face_indices, dtype=np.int64)
        faces = self.faces[face_indices]
        used, inverse = np.unique(faces, return_inverse=True)
        return (TriangleMesh(self.vertices[used], inverse.reshape(-1, 3)),
                face_indices.copy())

    def merged(self, other: "TriangleMesh") -> "TriangleMesh":
        verts = np.vstack([self.vertices, other.vertices])
        faces = np.vstack([self.faces, other.faces + len(self.vertices)])
        return TriangleMesh(verts, faces)


def _weld_and_clean(vertices: np.ndarray, faces: np.ndarray,
                    tol: float = WELD_TOLERANCE_MM) -> tuple[np.ndarray, np.ndarray, int]:
    """Merge vertices on a ``tol`` grid, drop degenerate faces, count the drops."""
    if not np.all(np.isfinite(vertices)):
        raise MalformedGeometryError("non-finite vertex coordinates")
    if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
        raise MalformedGeometryError("face index out of range")
    keys = np.round(vertices / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    welded = vertices[first]
    faces = inverse[faces]
    distinct = ((faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2])
                & (faces[:, 0] != faces[:, 2]))
    dropped = int(np.count_nonzero(~distinct))
    faces = faces[distinct]
    if len(faces):
        tri = welded[faces]
        areas = 0.5 * np.linalg.norm(
            np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        keep = areas > DEGENERATE_AREA_MM2
        dropped += int(np.count_nonzero(~keep))
        faces = faces[keep]
    if len(faces) == 0:
        raise MalformedGeometryError("zero faces after degenerate cleanup")
    used = np.unique(faces)
    remap = np.full(len(welded), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return welded[used], remap[faces], dropped


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------

def _triangulate_polygon(indices: list[int]) -> list[list[int]]:
    return [[indices[0], indices[i], indices[i + 1]] for i in range(1, len(indices) - 1)]


def _parse_obj(text: str) -> tuple[np.ndarray, np.ndarray]:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    for line in text.splitlines():
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        if tokens[0] == "v":
            if len(tokens) < 4:
                raise MalformedGeometryError("OBJ vertex line with < 3 coordinates")
            verts.append([float(x) for x in tokens[1:4]])
        elif tokens[0] == "f":
            idx = []
            for tok in tokens[1:]:
                raw = int(tok.split("/")[0])
                idx.append(raw - 1 if raw > 0 else len(verts) + raw)
            if len(idx) < 3:
                raise MalformedGeometryError("OBJ face with < 3 vertices")
            faces.extend(_triangulate_polygon(idx))
    return np.array(verts, dtype=float).reshape(-1, 3), \
        np.array(faces, dtype=np.int64).reshape(-1, 3)


def _parse_stl_ascii(text: str) -> tuple[np.ndarray, np.ndarray]:
    verts: list[list[float]] = []
    for line in text.splitlines():
        tokens = line.split()
        if tokens and tokens[0] == "vertex":
            verts.append([float(x) for x in tokens[1:4]])
    if len(verts) % 3 != 0:
        raise MalformedGeometryError("ASCII STL vertex count not a multiple of 3")
    vertices = np.array(verts, dtype=float).reshape(-1, 3)
    faces = np.arange(len(vertices), dtype=np.int64).reshape(-1, 3)
    return vertices, faces


def _parse_stl_binary(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) < 84:
        raise MeshLoadError("binary STL shorter than its 84-byte header")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + count * 50
    if len(data) < expected:
        raise MeshLoadError("binary STL truncated")
    raw = np.frombuffer(data, dtype=np.uint8, count=count * 50, offset=84)
    rec = raw.reshape(count, 50)[:, :48].copy().view("<f4").reshape(count, 12)
    vertices = rec[:, 3:12].astype(np.float64).reshape(-1, 3)
    faces = np.arange(len(vertices), dtype=np.int64).reshape(-1, 3)
    return vertices, faces


def _parse_ply_ascii(text: str) -> tuple[np.ndarray, np.ndarray]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshLoadError("not a PLY file")
    i = 1
    n_verts = n_faces = None
    vertex_props: list[str] = []
    element = None
    while i < len(lines):
        tokens = lines[i].split()
        i += 1
        if not tokens:
            continue
        if tokens[0] == "format":
            if tokens[1] != "ascii":
                raise MeshLoadError("only ASCII PLY is supported")
        elif tokens[0] == "element":
            element = tokens[1]
            if element == "vertex":
                n_verts = int(tokens[2])
            elif element == "face":
                n_faces = int(tokens[2])
        elif tokens[0] == "property" and element == "vertex" and tokens[1] != "list":
            vertex_props.append(tokens[-1])
        elif tokens[0] == "end_header":
            break
    else:
        raise MeshLoadError("PLY header missing end_header")
    if n_verts is None or n_faces is None:
        raise MeshLoadError("PLY header missing vertex or face element")
    try:
        ix, iy, iz = (vertex_props.index(c) for c in ("x", "y", "z"))
    except ValueError as exc:
        raise MeshLoadError("PLY vertex element lacks x/y/z properties") from exc
    verts = np.empty((n_verts, 3), dtype=float)
    for v in range(n_verts):
        tokens = lines[i + v].split()
        verts[v] = [float(tokens[ix]), float(tokens[iy]), float(tokens[iz])]
    i += n_verts
    faces: list[list[int]] = []
    for f in range(n_faces):
        tokens = lines[i + f].split()
        count = int(tokens[0])
        idx = [int(t) for t in tokens[1:1 + count]]
        if count < 3:
            raise MalformedGeometryError("PLY face with < 3 vertices")
        faces.extend(_triangulate_polygon(idx))
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


_EXTENSION_FORMATS = {".obj": "obj", ".stl": "stl", ".ply": "ply"}


def load_mesh(path, fmt: str | None = None) -> TriangleMesh:
    """Load OBJ / STL (binary or ASCII) / ASCII PLY into a welded TriangleMesh.

    ``fmt`` is one of {"obj", "stl", "stl-ascii", "stl-binary", "ply"}; by
    default it is inferred from the file extension. Degenerate faces are
    dropped and counted on ``mesh.dropped_degenerate_faces``.
    """
    path = Path(path)
    if fmt is None:
        fmt = _EXTENSION_FORMATS.get(path.suffix.lower())
        if fmt is None:
            raise MeshLoadError(f"cannot infer mesh format from '{path.name}'")
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise MeshLoadError(f"cannot read '{path}': {exc}") from exc

    try:
        if fmt == "obj":
            verts, faces = _parse_obj(data.decode("utf-8", errors="replace"))
        elif fmt == "ply":
            verts, faces = _parse_ply_ascii(data.decode("utf-8", errors="replace"))
        elif fmt in ("stl", "stl-ascii", "stl-binary"):
            looks_ascii = data[:5] == b"solid"
            if fmt == "stl-ascii" or (fmt == "stl" and looks_ascii):
                try:
                    verts, faces = _parse_stl_ascii(data.decode("utf-8"))
                except (UnicodeDecodeError, ValueError, MalformedGeometryError):
                    if fmt == "stl-ascii":
                        raise
                    verts, faces = _parse_stl_binary(data)
            else:
                verts, faces = _parse_stl_binary(data)
        else:
            raise MeshLoadError(f"unknown mesh format '{fmt}'")
    except (ValueError, IndexError) as exc:
        raise MalformedGeometryError(f"malformed {fmt} file '{path.name}': {exc}") from exc

    if len(faces) == 0:
        raise MalformedGeometryError(f"'{path.name}' contains no faces")
    verts, faces, dropped = _weld_and_clean(verts, faces)
    return TriangleMesh(verts, faces, dropped_degenerate_faces=dropped)


def save_ply(mesh: TriangleMesh, path, face_colors: np.ndarray | None = None) -> None:
    """Write ASCII PLY, optionally with per-face uchar RGB colors."""
    path = Path(path)
    lines = ["ply", "format ascii 1.0",
             f"element vertex {len(mesh.vertices)}",
             "property float x", "property float y", "property float z",
             f"element face {len(mesh.faces)}",
             "property list uchar int vertex_indices"]
    if face_colors is not None:
        face_colors = np.asarray(face_colors, dtype=np.uint8)
        if face_colors.shape != (len(mesh.faces), 3):
            raise ValueError("face_colors must be (n_faces, 3) uint8")
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    for v in mesh.vertices:
        lines.append(f"{v[0]:.10g} {v[1]:.10g} {v[2]:.10g}")
    for fi, f in enumerate(mesh.faces):
        row = f"3 {f[0]} {f[1]} {f[2]}"
        if face_colors is not None:
            c = face_colors[fi]
            row += f" {c[0]} {c[1]} {c[2]}"
        lines.append(row)
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Smoothing and hull volume
# ---------------------------------------------------------------------------

def smooth_mesh(mesh: TriangleMesh, iterations: int, strength: float = 0.5) -> TriangleMesh:
    """Taubin lambda/mu smoothing with uniform 1-ring weights.

    ``strength`` is the positive (shrink) factor; the inflate factor is
    ``-(strength + 0.03)``, which keeps low frequencies roughly in place
    instead of shrinking the mesh like plain Laplacian smoothing would.
    Connectivity is untouched; iterations == 0 returns the mesh unchanged.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if not 0.0 < strength < 1.0:
        raise ValueError("strength must be in (0, 1)")
    if iterations == 0:
        return mesh
    verts = mesh.vertices.copy()
    neighbors = mesh.vertex_neighbors
    mu = -(strength + 0.03)

    def laplacian(v: np.ndarray) -> np.ndarray:
        lap = np.zeros_like(v)
        for i, nbr in enumerate(neighbors):
            if len(nbr):
                lap[i] = v[nbr].mean(axis=0) - v[i]
        return lap

    for _ in range(iterations):
        verts = verts + strength * laplacian(verts)
        verts = verts + mu * laplacian(verts)
    if not np.all(np.isfinite(verts)):
        raise MalformedGeometryError("smoothing produced non-finite vertices")
    return TriangleMesh(verts, mesh.faces,
                        dropped_degenerate_faces=mesh.dropped_degenerate_faces)


def convex_hull_volume(points: np.ndarray) -> float:
    """Volume of the convex hull of >= 4 non-coplanar points (Qhull)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise DegenerateInputError("need at least 4 points in 3D")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateInputError(f"degenerate hull input: {exc}") from exc
    return float(hull.volume)


def convex_hull_vertices(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise DegenerateInputError("need at least 4 points in 3D")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateInputError(f"degenerate hull input: {exc}") from exc
    return pts[hull.vertices]
