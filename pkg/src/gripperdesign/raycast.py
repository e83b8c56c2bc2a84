"""BVH-accelerated ray casting against triangle meshes.

The accelerator is contract-bound to return exactly the hits a brute-force
scan over all faces returns (same set, same order); ``brute_force_hits`` is
the independent oracle used to verify that in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh

_DET_EPS = 1e-12
_LEAF_SIZE = 8


@dataclass(frozen=True)
class RayHit:
    distance: float
    face_index: int
    point: np.ndarray


def _moller_trumbore(origins, directions, v0, e1, e2):
    """Vectorized ray/triangle intersection over paired rays and triangles.

    Returns (t, valid); hits on both triangle sides are accepted because
    input meshes may have inconsistent winding.
    """
    p = np.cross(directions, e2)
    det = np.einsum("ij,ij->i", e1, p)
    valid = np.abs(det) > _DET_EPS
    inv = np.where(valid, det, 1.0)
    inv = 1.0 / inv
    tvec = origins - v0
    u = np.einsum("ij,ij->i", tvec, p) * inv
    q = np.cross(tvec, e1)
    v = np.einsum("ij,ij->i", directions, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    valid &= (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
    return t, valid


class BvhAccelerator:
    """Median-split AABB tree over mesh faces; immutable once built."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        tri = mesh.triangles
        self._v0 = np.ascontiguousarray(tri[:, 0])
        self._e1 = np.ascontiguousarray(tri[:, 1] - tri[:, 0])
        self._e2 = np.ascontiguousarray(tri[:, 2] - tri[:, 0])
        lo = tri.min(axis=1)
        hi = tri.max(axis=1)
        centers = 0.5 * (lo + hi)
        order = np.arange(len(tri))

        node_lo: list[np.ndarray] = []
        node_hi: list[np.ndarray] = []
        node_left: list[int] = []
        node_right: list[int] = []
        node_start: list[int] = []
        node_count: list[int] = []
        perm: list[np.ndarray] = []
        offset = 0

        def build(idx: np.ndarray) -> int:
            nonlocal offset
            node = len(node_lo)
            node_lo.append(lo[idx].min(axis=0))
            node_hi.append(hi[idx].max(axis=0))
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(-1)
            node_count.append(0)
            if len(idx) <= _LEAF_SIZE:
                node_start[node] = offset
                node_count[node] = len(idx)
                perm.append(idx)
                offset += len(idx)
                return node
            c = centers[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            ordering = np.argsort(c[:, axis], kind="stable")
            half = len(idx) // 2
            node_left[node] = build(idx[ordering[:half]])
            node_right[node] = build(idx[ordering[half:]])
            return node

        import sys
        limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(limit, 10000))
        try:
            build(order)
        finally:
            sys.setrecursionlimit(limit)

        self._node_lo = np.array(node_lo)
        self._node_hi = np.array(node_hi)
        self._node_left = np.array(node_left, dtype=np.int64)
        self._node_right = np.array(node_right, dtype=np.int64)
        self._node_start = np.array(node_start, dtype=np.int64)
        self._node_count = np.array(node_count, dtype=np.int64)
        self._perm = np.concatenate(perm) if perm else np.empty(0, dtype=np.int64)

    # -- traversal helpers --

    def _candidate_pairs(self, origins: np.ndarray, inv_dirs: np.ndarray):
        """Collect (ray, face) candidate pairs via packet slab traversal."""
        ray_out: list[np.ndarray] = []
        tri_out: list[np.ndarray] = []
        stack: list[tuple[int, np.ndarray]] = [(0, np.arange(len(origins)))]
        while stack:
            node, rays = stack.pop()
            t0 = (self._node_lo[node] - origins[rays]) * inv_dirs[rays]
            t1 = (self._node_hi[node] - origins[rays]) * inv_dirs[rays]
            near = np.minimum(t0, t1).max(axis=1)
            far = np.maximum(t0, t1).min(axis=1)
            alive = rays[(far >= np.maximum(near, 0.0)) & (far >= 0.0)]
            if len(alive) == 0:
                continue
            if self._node_left[node] < 0:
                start = self._node_start[node]
                tris = self._perm[start:start + self._node_count[node]]
                ray_out.append(np.repeat(alive, len(tris)))
                tri_out.append(np.tile(tris, len(alive)))
            else:
                stack.append((int(self._node_left[node]), alive))
                stack.append((int(self._node_right[node]), alive))
        if not ray_out:
            return (np.empty(0, dtype=np.int64),) * 2
        return np.concatenate(ray_out), np.concatenate(tri_out)

    @staticmethod
    def _safe_inverse(directions: np.ndarray) -> np.ndarray:
        d = directions.copy()
        tiny = np.abs(d) < 1e-300
        d[tiny] = np.where(np.signbit(d[tiny]), -1e-300, 1e-300)
        return 1.0 / d

    def _hits_arrays(self, origins, directions, ignore_faces, min_distance):
        origins = np.atleast_2d(np.asarray(origins, dtype=float))
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        rays, tris = self._candidate_pairs(origins, self._safe_inverse(directions))
        if len(rays) == 0:
            return rays, tris, np.empty(0)
        t, valid = _moller_trumbore(origins[rays], directions[rays],
                                    self._v0[tris], self._e1[tris], self._e2[tris])
        valid &= t >= min_distance
        if ignore_faces is not None:
            valid &= tris != np.asarray(ignore_faces, dtype=np.int64)[rays]
        return rays[valid], tris[valid], t[valid]

    # -- public queries --

    def cast(self, origin, direction, ignore_face: int | None = None,
             min_distance: float = 0.0) -> list[RayHit]:
        origin = np.asarray(origin, dtype=float)
        direction = np.asarray(direction, dtype=float)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise ValueError("direction must be unit length")
        ignore = None if ignore_face is None else np.array([ignore_face])
        rays, tris, t = self._hits_arrays(origin[None], direction[None],
                                          ignore, min_distance)
        order = np.lexsort((tris, t))
        return [RayHit(float(t[i]), int(tris[i]), origin + t[i] * direction)
                for i in order]

    def first_hits(self, origins, directions, ignore_faces=None,
                   min_distance: float = 0.0):
        """First hit per ray: (distances, face ids); misses are inf / -1."""
        origins = np.atleast_2d(np.asarray(origins, dtype=float))
        n = len(origins)
        rays, tris, t = self._hits_arrays(origins, directions, ignore_faces,
                                          min_distance)
        dist = np.full(n, np.inf)
        face = np.full(n, -1, dtype=np.int64)
        if len(rays):
            order = np.lexsort((tris, t, rays))
            rs, first = np.unique(rays[order], return_index=True)
            dist[rs] = t[order][first]
            face[rs] = tris[order][first]
        return dist, face

    def query_aabb(self, lo, hi) -> np.ndarray:
        """Face indices whose AABB overlaps the query box (superset of true hits)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        out: list[np.ndarray] = []
        stack = [0]
        while stack:
            node = stack.pop()
            if np.any(self._node_lo[node] > hi) or np.any(self._node_hi[node] < lo):
                continue
            if self._node_left[node] < 0:
                start = self._node_start[node]
                out.append(self._perm[start:start + self._node_count[node]])
            else:
                stack.append(int(self._node_left[node]))
                stack.append(int(self._node_right[node]))
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(out))


def cast_ray(accel: BvhAccelerator, origin, direction,
             ignore_face: int | None = None) -> list[RayHit]:
    """All hits along the ray sorted by distance (ties by face index)."""
    return accel.cast(origin, direction, ignore_face=ignore_face)


def brute_force_hits(mesh: TriangleMesh, origin, direction,
                     ignore_face: int | None = None,
                     min_distance: float = 0.0) -> list[RayHit]:
    """Oracle: intersect every face, no acceleration structure."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    tri = mesh.triangles
    n = len(tri)
    t, valid = _moller_trumbore(np.broadcast_to(origin, (n, 3)),
                                np.broadcast_to(direction, (n, 3)),
                                tri[:, 0], tri[:, 1] - tri[:, 0],
                                tri[:, 2] - tri[:, 0])
    valid &= t >= min_distance
    if ignore_face is not None:
        valid[ignore_face] = False
    idx = np.flatnonzero(valid)
    order = np.lexsort((idx, t[idx]))
    return [RayHit(float(t[idx[i]]), int(idx[i]), origin + t[idx[i]] * direction)
            for i in order]
