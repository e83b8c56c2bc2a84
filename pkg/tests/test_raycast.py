import numpy as np
import pytest

from gripperdesign.meshgen import make_box, make_sphere
from gripperdesign.raycast import BvhAccelerator, brute_force_hits, cast_ray


def _hit_tuples(hits):
    return [(round(h.distance, 12), h.face_index) for h in hits]


class TestCastRay:
    def test_cube_center_plus_x(self, unit_cube):
        accel = BvhAccelerator(unit_cube)
        hits = cast_ray(accel, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
        assert hits
        assert hits[0].distance == pytest.approx(0.5, abs=1e-12)
        assert np.allclose(hits[0].point, [0.5, 0.0, 0.0], atol=1e-9)
        # hit face lies on the +x side of the cube
        assert unit_cube.face_centroids[hits[0].face_index][0] == pytest.approx(0.5)

    def test_ray_pointing_away_is_empty(self, unit_cube):
        accel = BvhAccelerator(unit_cube)
        assert cast_ray(accel, [5.0, 0.0, 0.0], [1.0, 0.0, 0.0]) == []

    def test_non_unit_direction_rejected(self, unit_cube):
        accel = BvhAccelerator(unit_cube)
        with pytest.raises(ValueError):
            accel.cast([0, 0, 0], [1.0, 1.0, 0.0])

    def test_hit_point_consistency(self, sphere_r10):
        accel = BvhAccelerator(sphere_r10)
        rng = np.random.default_rng(4)
        for _ in range(50):
            origin = rng.normal(size=3) * 2.0
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            for hit in accel.cast(origin, d):
                assert np.linalg.norm(hit.point - (origin + hit.distance * d)) < 1e-6

    def test_ignore_face(self, unit_cube):
        accel = BvhAccelerator(unit_cube)
        full = cast_ray(accel, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
        skipped = cast_ray(accel, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                           ignore_face=full[0].face_index)
        assert full[0].face_index not in [h.face_index for h in skipped]


class TestOracleEquivalence:
    def test_1000_random_rays_match_brute_force(self):
        mesh = make_sphere(8.0, subdivisions=2)   # 320 faces
        box = make_box((6.0, 9.0, 12.0), center=(4.0, 0.0, 0.0), resolution=3)
        mesh = mesh.merged(box)                   # ~500 faces, overlapping solids
        accel = BvhAccelerator(mesh)
        rng = np.random.default_rng(7)
        for _ in range(1000):
            origin = rng.uniform(-15.0, 15.0, 3)
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            fast = _hit_tuples(accel.cast(origin, d))
            slow = _hit_tuples(brute_force_hits(mesh, origin, d))
            assert fast == slow

    def test_first_hits_match_cast(self, sphere_r10):
        accel = BvhAccelerator(sphere_r10)
        rng = np.random.default_rng(9)
        origins = rng.uniform(-5.0, 5.0, size=(200, 3))
        dirs = rng.normal(size=(200, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dist, face = accel.first_hits(origins, dirs)
        for i in range(200):
            hits = accel.cast(origins[i], dirs[i])
            if hits:
                assert dist[i] == pytest.approx(hits[0].distance, abs=1e-12)
                assert face[i] == hits[0].face_index
            else:
                assert np.isinf(dist[i]) and face[i] == -1


class TestAabbQuery:
    def test_query_is_superset_of_overlaps(self, sphere_r10):
        accel = BvhAccelerator(sphere_r10)
        tri = sphere_r10.triangles
        lo_t, hi_t = tri.min(axis=1), tri.max(axis=1)
        rng = np.random.default_rng(11)
        for _ in range(20):
            center = rng.uniform(-10, 10, 3)
            half = rng.uniform(1.0, 6.0, 3)
            got = set(accel.query_aabb(center - half, center + half).tolist())
            true = set(np.flatnonzero(
                np.all(lo_t <= center + half, axis=1)
                & np.all(hi_t >= center - half, axis=1)).tolist())
            assert true <= got
