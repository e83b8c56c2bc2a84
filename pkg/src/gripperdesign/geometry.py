"""Small vector / rigid-transform helpers used throughout the package.

All geometry is in millimetres. Transforms are 4x4 row-major matrices that
map column vectors, i.e. ``world = T @ [x, y, z, 1]``.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation, Slerp


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-15:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def perpendicular(v: np.ndarray) -> np.ndarray:
    """Deterministic unit vector perpendicular to ``v`` (smallest-component trick)."""
    v = unit(v)
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(v)))] = 1.0
    return unit(np.cross(v, helper))


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    a = unit(axis)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def make_transform(rotation: np.ndarray | None = None,
                   translation: np.ndarray | None = None) -> np.ndarray:
    t = np.eye(4)
    if rotation is not None:
        t[:3, :3] = rotation
    if translation is not None:
        t[:3, 3] = translation
    return t


def translation(offset) -> np.ndarray:
    return make_transform(translation=np.asarray(offset, dtype=float))


def apply_transform(t: np.ndarray, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = pts @ t[:3, :3].T + t[:3, 3]
    return out[0] if np.ndim(points) == 1 else out


def apply_rotation(t: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    vec = np.atleast_2d(np.asarray(vectors, dtype=float))
    out = vec @ t[:3, :3].T
    return out[0] if np.ndim(vectors) == 1 else out


def is_rigid(t: np.ndarray, tol: float = 1e-9) -> bool:
    t = np.asarray(t, dtype=float)
    if t.shape != (4, 4) or not np.all(np.isfinite(t)):
        return False
    if not np.allclose(t[3], [0, 0, 0, 1], atol=tol):
        return False
    r = t[:3, :3]
    if not np.allclose(r @ r.T, np.eye(3), atol=tol):
        return False
    return abs(np.linalg.det(r) - 1.0) <= max(tol, 1e-9)


def invert_transform(t: np.ndarray) -> np.ndarray:
    r = t[:3, :3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ t[:3, 3]
    return out


def interpolate_rigid(t0: np.ndarray, t1: np.ndarray, fraction: float) -> np.ndarray:
    """Screw-free interpolation: slerp on rotation, lerp on translation."""
    rots = Rotation.from_matrix(np.stack([t0[:3, :3], t1[:3, :3]]))
    rot = Slerp([0.0, 1.0], rots)(float(fraction)).as_matrix()
    pos = (1.0 - fraction) * t0[:3, 3] + fraction * t1[:3, 3]
    return make_transform(rot, pos)


def pose_ladder(t_before: np.ndarray, t_after: np.ndarray, samples: int) -> list[np.ndarray]:
    """Interpolated poses from t_before to t_after, both endpoints included."""
    if samples < 2:
        return [np.array(t_after, dtype=float)]
    return [interpolate_rigid(t_before, t_after, s)
            for s in np.linspace(0.0, 1.0, samples)]


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    ua, ub = unit(a), unit(b)
    return float(np.arccos(np.clip(np.dot(ua, ub), -1.0, 1.0)))
