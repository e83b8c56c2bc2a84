import numpy as np
import pytest

from conftest import random_rotation
from gripperdesign.errors import DegenerateInputError
from gripperdesign.geometry import rotation_about_axis
from gripperdesign.mesh import convex_hull_volume
from gripperdesign.meshgen import make_box, make_l_block, make_tube
from gripperdesign.primitives import (THREE_FINGER, TWO_FINGER, FittedCylinder,
                                      detect_box_face_emptiness,
                                      fit_cylinder_ransac, fit_oriented_box,
                                      sample_surface_points, select_primitive)

BOX_CORNERS = np.array([[i * 10.0, j * 20.0, k * 30.0]
                        for i in (0, 1) for j in (0, 1) for k in (0, 1)])


def cylinder_points(radius, height, n, rng, noise=0.0):
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    z = rng.uniform(0.0, height, n)
    pts = np.column_stack([radius * np.cos(ang), radius * np.sin(ang), z])
    normals = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(n)])
    if noise:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    return pts, normals


def axis_error(fit, true_axis):
    return np.arccos(min(1.0, abs(float(fit.axis_dir @ true_axis))))


class TestCylinderRansac:
    def test_noiseless_exact(self):
        pts, normals = cylinder_points(10.0, 40.0, 3000, np.random.default_rng(0))
        fit = fit_cylinder_ransac(pts, normals, distance_tol=0.1, seed=0)
        assert fit is not None
        assert abs(fit.radius - 10.0) / 10.0 < 1e-6
        assert axis_error(fit, np.array([0.0, 0.0, 1.0])) < 1e-4
        assert fit.height == pytest.approx(40.0, abs=0.5)
        assert fit.lateral_surface_nonempty

    def test_noisy_statistics_over_20_seeds(self):
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            pts, normals = cylinder_points(10.0, 40.0, 3000, rng, noise=0.02)
            fit = fit_cylinder_ransac(pts, normals, distance_tol=0.1, seed=seed)
            assert fit is not None
            assert abs(fit.radius - 10.0) / 10.0 < 0.01
            assert axis_error(fit, np.array([0.0, 0.0, 1.0])) < np.deg2rad(1.0)

    def test_flat_plate_no_fit(self):
        plate = make_box((40.0, 40.0, 1.0), resolution=8)
        pts, normals = sample_surface_points(plate, 3000, seed=1)
        assert fit_cylinder_ransac(pts, normals, distance_tol=0.1, seed=1) is None

    def test_too_few_points(self):
        pts, normals = cylinder_points(5.0, 10.0, 20, np.random.default_rng(0))
        with pytest.raises(DegenerateInputError):
            fit_cylinder_ransac(pts, normals, distance_tol=0.1)

    def test_inliers_verified_independently(self):
        rng = np.random.default_rng(5)
        pts, normals = cylinder_points(7.0, 25.0, 2000, rng, noise=0.01)
        tol = 0.05
        fit = fit_cylinder_ransac(pts, normals, distance_tol=tol, seed=5)
        rel = pts - fit.axis_point
        along = rel @ fit.axis_dir
        radial = np.linalg.norm(rel - np.outer(along, fit.axis_dir), axis=1)
        dist = np.abs(radial - fit.radius)
        assert (dist <= tol).mean() >= fit.inlier_fraction - 1e-9

    def test_rigid_equivariance(self):
        rng = np.random.default_rng(6)
        pts, normals = cylinder_points(9.0, 30.0, 2000, rng)
        rot = random_rotation(np.random.default_rng(7))
        fit_a = fit_cylinder_ransac(pts, normals, distance_tol=0.05, seed=6)
        fit_b = fit_cylinder_ransac(pts @ rot.T + [5, 6, 7], normals @ rot.T,
                                    distance_tol=0.05, seed=6)
        assert abs(fit_a.radius - fit_b.radius) / fit_a.radius < 1e-6
        assert abs(fit_a.height - fit_b.height) / fit_a.height < 1e-6

    def test_bore_surface_not_graspable(self):
        # same geometry, normals pointing at the axis: nothing to pinch onto
        rng = np.random.default_rng(8)
        pts, normals = cylinder_points(10.0, 30.0, 2000, rng)
        fit = fit_cylinder_ransac(pts, -normals, distance_tol=0.05, seed=8)
        assert fit is not None
        assert not fit.lateral_surface_nonempty


class TestOrientedBox:
    def test_axis_aligned_corners(self):
        box = fit_oriented_box(BOX_CORNERS)
        assert np.allclose(np.sort(box.half_extents), [5.0, 10.0, 15.0], atol=1e-9)
        assert box.volume == pytest.approx(6000.0, abs=1e-6)
        assert np.allclose(box.axes @ box.axes.T, np.eye(3), atol=1e-9)

    def test_rotated_corners_same_volume(self):
        rot = rotation_about_axis(np.array([0.0, 0.0, 1.0]), np.deg2rad(30.0))
        box = fit_oriented_box(BOX_CORNERS @ rot.T)
        assert box.volume == pytest.approx(6000.0, rel=1e-6)

    def test_contains_all_points(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            pts = rng.normal(size=(400, 3)) * [3.0, 8.0, 1.5]
            box = fit_oriented_box(pts)
            assert box.contains(pts, slack=1e-6).all()

    def test_cylinder_box_at_least_circumscribed(self, cylinder_r10_h40):
        pts, _ = sample_surface_points(cylinder_r10_h40, 4000, seed=2)
        box = fit_oriented_box(pts)
        assert box.volume >= 20.0 * 20.0 * 40.0 * 0.98

    def test_within_20pct_of_exhaustive_rotation_search(self):
        def oracle_volume(points):
            # exhaustive Euler-angle scan at 3 degree steps
            best = np.inf
            angles = np.deg2rad(np.arange(0.0, 90.0, 3.0))
            for a in angles:
                ra = rotation_about_axis(np.array([0.0, 0.0, 1.0]), a)
                for b in angles:
                    rb = rotation_about_axis(np.array([0.0, 1.0, 0.0]), b)
                    for c in angles:
                        rc = rotation_about_axis(np.array([1.0, 0.0, 0.0]), c)
                        proj = points @ (ra @ rb @ rc)
                        vol = np.prod(proj.max(axis=0) - proj.min(axis=0))
                        best = min(best, vol)
            return best

        fixtures = []
        rng = np.random.default_rng(3)
        rot = random_rotation(rng)
        fixtures.append(BOX_CORNERS @ rot.T)
        lb = make_l_block()
        pts, _ = sample_surface_points(lb, 600, seed=3)
        fixtures.append(pts @ random_rotation(rng).T)
        fixtures.append(rng.normal(size=(200, 3)) * [2.0, 5.0, 9.0])
        for pts in fixtures:
            from gripperdesign.mesh import convex_hull_vertices
            hull = convex_hull_vertices(pts)
            assert fit_oriented_box(pts).volume <= 1.2 * oracle_volume(hull) + 1e-9

    def test_coplanar_errors(self):
        flat = np.column_stack([np.random.default_rng(0).uniform(size=(50, 2)),
                                np.zeros(50)])
        with pytest.raises(DegenerateInputError):
            fit_oriented_box(flat)


class TestFaceEmptiness:
    def test_closed_box_all_faces_nonempty(self):
        mesh = make_box((20.0, 20.0, 20.0), resolution=8)
        pts, _ = sample_surface_points(mesh, 5000, seed=1)
        box = fit_oriented_box(pts)
        diag = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
        flags = detect_box_face_emptiness(pts, box, shell_tol=0.01 * diag)
        assert flags.all()

    def test_open_top_box_exactly_one_empty(self):
        mesh = make_box((20.0, 20.0, 20.0), resolution=8, open_faces=("+z",))
        pts, _ = sample_surface_points(mesh, 5000, seed=2)
        box = fit_oriented_box(pts)
        diag = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
        flags = detect_box_face_emptiness(pts, box, shell_tol=0.01 * diag)
        assert flags.sum() == 5
        # the empty face is the one whose outward axis points up
        empty = int(np.flatnonzero(~flags)[0])
        axis, sign = divmod(empty, 2)
        direction = box.axes[axis] * (1.0 if sign == 0 else -1.0)
        assert direction[2] > 0.9

    def test_annular_ring_sides_empty(self):
        ring = make_tube(20.0, 8.0, 10.0, n_sides=64)
        pts, normals = sample_surface_points(ring, 5000, seed=3)
        box = fit_oriented_box(pts)
        diag = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
        flags = detect_box_face_emptiness(pts, box, shell_tol=0.01 * diag)
        assert flags.sum() == 2
        # the occupied pair is across the thinnest axis (the flat annuli)
        k = int(np.argmin(box.half_extents))
        assert flags[2 * k] and flags[2 * k + 1]
        # and the cylinder fit across the same points has no graspable wall
        fit = fit_cylinder_ransac(pts, normals, distance_tol=0.3, seed=3)
        assert fit is None or not fit.lateral_surface_nonempty


class TestSelection:
    def _analyzed(self, mesh, seed, tol=0.3):
        pts, normals = sample_surface_points(mesh, 5000, seed=seed)
        cyl = fit_cylinder_ransac(pts, normals, distance_tol=tol, seed=seed)
        box = fit_oriented_box(pts)
        diag = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
        box.face_nonempty = detect_box_face_emptiness(pts, box,
                                                      shell_tol=0.01 * diag)
        return pts, cyl, box

    def test_solid_cylinder_three_finger(self, cylinder_r10_h40):
        pts, cyl, box = self._analyzed(cylinder_r10_h40, seed=4)
        sel = select_primitive(pts, 0, cyl, box)
        assert sel.kind == "cylinder"
        assert sel.gripper_type == THREE_FINGER
        assert sel.width == pytest.approx(20.0, rel=0.01)

    def test_cuboid_two_finger(self):
        mesh = make_box((10.0, 20.0, 30.0), resolution=6)
        pts, cyl, box = self._analyzed(mesh, seed=5)
        sel = select_primitive(pts, 0, cyl, box)
        assert sel.kind == "box"
        assert sel.gripper_type == TWO_FINGER
        assert sel.width == pytest.approx(10.0, rel=0.05)

    def test_ring_box_wins_despite_cylinder_volume(self):
        ring = make_tube(20.0, 8.0, 10.0, n_sides=64)
        pts, cyl, box = self._analyzed(ring, seed=6)
        hull = convex_hull_volume(pts)
        if cyl is not None:
            # the cylinder hugs the ring volume better, but its wall is empty
            assert abs(cyl.volume - hull) < abs(box.volume - hull)
            assert not cyl.lateral_surface_nonempty
        sel = select_primitive(pts, 0, cyl, box)
        assert sel.kind == "box"
        assert sel.gripper_type == TWO_FINGER

    def test_never_selects_empty_surface(self):
        rng = np.random.default_rng(7)
        pts, normals = cylinder_points(10.0, 40.0, 2000, rng)
        cyl = fit_cylinder_ransac(pts, normals, distance_tol=0.05, seed=7)
        blocked = FittedCylinder(cyl.axis_point, cyl.axis_dir, cyl.radius,
                                 cyl.height, cyl.inlier_fraction, False)
        box = fit_oriented_box(pts)
        box.face_nonempty = np.zeros(6, dtype=bool)
        assert select_primitive(pts, 0, blocked, box) is None

    def test_width_matches_primitive_dimension(self, cylinder_r10_h40):
        pts, cyl, box = self._analyzed(cylinder_r10_h40, seed=8)
        sel = select_primitive(pts, 0, cyl, box)
        assert sel.width == pytest.approx(2.0 * sel.cylinder.radius, abs=1e-12)

    def test_degenerate_segment_unselectable(self):
        flat = np.column_stack([np.random.default_rng(1).uniform(size=(100, 2)) * 10,
                                np.zeros(100)])
        assert select_primitive(flat, 0, None, None) is None


def test_sampling_is_area_weighted_and_seeded(unit_cube):
    pts_a, n_a = sample_surface_points(unit_cube, 500, seed=3)
    pts_b, n_b = sample_surface_points(unit_cube, 500, seed=3)
    assert np.array_equal(pts_a, pts_b)
    assert np.allclose(np.linalg.norm(n_a, axis=1), 1.0)
    # every sample sits on the cube surface
    on_surface = (np.abs(np.abs(pts_a) - 0.5) < 1e-9).any(axis=1)
    assert on_surface.all()
