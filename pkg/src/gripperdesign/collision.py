"""Oriented-box vs triangle-mesh collision tests.

Narrow phase is the 13-axis separating-axis triangle/box test run in the
box's local frame; the production path prunes candidate triangles with the
mesh BVH while ``brute_force_collision`` scans every triangle and serves as
the oracle the accelerated path must match exactly.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh
from .raycast import BvhAccelerator


def tri_box_overlap(tri_local: np.ndarray, half_extents: np.ndarray) -> np.ndarray:
    """SAT overlap of triangles (m, 3, 3) against an origin-centered AABB."""
    tri = np.asarray(tri_local, dtype=float)
    h = np.asarray(half_extents, dtype=float)
    m = len(tri)
    alive = np.ones(m, dtype=bool)

    # box face axes
    for k in range(3):
        lo = tri[:, :, k].min(axis=1)
        hi = tri[:, :, k].max(axis=1)
        alive &= (lo <= h[k]) & (hi >= -h[k])
    if not alive.any():
        return alive

    e = np.stack([tri[:, 1] - tri[:, 0],
                  tri[:, 2] - tri[:, 1],
                  tri[:, 0] - tri[:, 2]], axis=1)

    # 9 edge cross products
    for i in range(3):  # box axis
        for j in range(3):  # triangle edge
            axis = np.zeros((m, 3))
            a, b = (i + 1) % 3, (i + 2) % 3
            axis[:, a] = -e[:, j, b]
            axis[:, b] = e[:, j, a]
            proj = np.einsum("mvk,mk->mv", tri, axis)
            rad = (np.abs(axis) * h).sum(axis=1)
            alive &= (proj.min(axis=1) <= rad) & (proj.max(axis=1) >= -rad)
    if not alive.any():
        return alive

    # triangle plane
    normal = np.cross(e[:, 0], e[:, 1])
    dist = np.einsum("mk,mk->m", normal, tri[:, 0])
    rad = (np.abs(normal) * h).sum(axis=1)
    alive &= np.abs(dist) <= rad
    return alive


class OrientedBox:
    """Box given by center, row-wise unit axes, and half extents (world frame)."""

    __slots__ = ("center", "axes", "half_extents")

    def __init__(self, center, axes, half_extents):
        self.center = np.asarray(center, dtype=float)
        self.axes = np.asarray(axes, dtype=float)
        self.half_extents = np.asarray(half_extents, dtype=float)

    def transformed(self, t: np.ndarray) -> "OrientedBox":
        return OrientedBox(t[:3, :3] @ self.center + t[:3, 3],
                           self.axes @ t[:3, :3].T, self.half_extents)

    def world_aabb(self) -> tuple[np.ndarray, np.ndarray]:
        reach = np.abs(self.axes.T) @ self.half_extents
        return self.center - reach, self.center + reach

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.center) @ self.axes.T

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all(np.abs(self.to_local(points)) <= self.half_extents + 1e-12,
                      axis=1)


class CollisionScene:
    """Obstacle meshes frozen at world poses, with lazily built BVHs."""

    def __init__(self, obstacles: list[TriangleMesh]):
        self.meshes = list(obstacles)
        self._accels: list[BvhAccelerator | None] = [None] * len(self.meshes)

    @classmethod
    def from_posed(cls, posed: list[tuple[TriangleMesh, np.ndarray]]) -> "CollisionScene":
        return cls([mesh.transformed(pose) for mesh, pose in posed])

    def accel(self, index: int) -> BvhAccelerator:
        if self._accels[index] is None:
            self._accels[index] = BvhAccelerator(self.meshes[index])
        return self._accels[index]


def _boxes_hit_mesh(boxes: list[OrientedBox], mesh: TriangleMesh,
                    accel: BvhAccelerator | None) -> bool:
    tri = mesh.triangles
    for box in boxes:
        if accel is not None:
            lo, hi = box.world_aabb()
            candidates = accel.query_aabb(lo, hi)
            if len(candidates) == 0:
                continue
            local = box.to_local(tri[candidates].reshape(-1, 3)).reshape(-1, 3, 3)
        else:
            local = box.to_local(tri.reshape(-1, 3)).reshape(-1, 3, 3)
        if tri_box_overlap(local, box.half_extents).any():
            return True
    # no surface crossing: a fully swallowed obstacle still collides
    for box in boxes:
        if box.contains(mesh.vertices).any():
            return True
    return False


def check_collision(boxes: list[OrientedBox], scene: CollisionScene) -> bool:
    """True iff any box intersects any obstacle triangle or swallows an obstacle."""
    return any(_boxes_hit_mesh(boxes, scene.meshes[i], scene.accel(i))
               for i in range(len(scene.meshes)))


def brute_force_collision(boxes: list[OrientedBox],
                          obstacles: list[TriangleMesh]) -> bool:
    """Oracle: same predicate, every triangle tested, no broad phase."""
    return any(_boxes_hit_mesh(boxes, mesh, None) for mesh in obstacles)
