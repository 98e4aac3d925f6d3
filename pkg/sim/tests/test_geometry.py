# sim/tests/test_geometry.py
from __future__ import annotations

import math

import numpy as np
import pytest
from django.test import SimpleTestCase
from scipy.spatial.transform import Rotation

from core.errors import DegenerateGradientError, InvalidShapeError
from core.utils.rotations import quat_from_rotvec
from sim.services.geometry import (
    Pose,
    Ray,
    SuperquadricShape,
    implicit_value,
    pose_interpolate,
    ray_intersect,
    ray_intersect_many,
    shape_volume,
    support_height,
    support_point,
    support_value,
    surface_normal,
    surface_point,
)
from sim.tests.factories import make_shape, make_sphere, random_pose, random_shape


class ImplicitValueTests(SimpleTestCase):
    def test_unit_sphere_examples(self):
        unit = SuperquadricShape(1.0, 1.0, 1.0, 1.0, 1.0)
        self.assertAlmostEqual(implicit_value([0.0, 0.0, 0.0], unit), -1.0, places=12)
        self.assertAlmostEqual(implicit_value([1.0, 0.0, 0.0], unit), 0.0, places=12)

    def test_boxy_corner(self):
        boxy = SuperquadricShape(1.0, 1.0, 1.0, 0.2, 0.2)
        self.assertAlmostEqual(implicit_value([1.0, 1.0, 1.0], boxy), 2.0, places=9)

    def test_vectorized_matches_scalar(self):
        shape = make_shape(0.03, 0.04, 0.06, 0.5, 1.5)
        pts = np.random.default_rng(0).uniform(-0.08, 0.08, (50, 3))
        batch = implicit_value(pts, shape)
        self.assertEqual(batch.shape, (50,))
        for p, f in zip(pts, batch):
            self.assertAlmostEqual(implicit_value(p, shape), f, places=14)

    def test_invalid_shapes_rejected(self):
        with self.assertRaises(InvalidShapeError):
            SuperquadricShape(0.03, 0.03, 0.03, 0.05, 1.0)
        with self.assertRaises(InvalidShapeError):
            SuperquadricShape(0.03, 0.0, 0.03, 1.0, 1.0)
        with self.assertRaises(InvalidShapeError):
            SuperquadricShape(0.03, 0.03, 0.03, 1.0, 2.5)
        with self.assertRaises(InvalidShapeError):
            SuperquadricShape.from_vector([0.03, 0.03, 0.03, 1.0])


class SurfacePointTests(SimpleTestCase):
    def test_parametric_examples(self):
        s = make_shape(0.03, 0.04, 0.06, 0.7, 1.3)
        np.testing.assert_allclose(surface_point(0.0, 0.0, s), [0.03, 0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(surface_point(math.pi / 2.0, 0.0, s), [0.0, 0.0, 0.06], atol=1e-15)


def test_parametric_points_satisfy_implicit_equation():
    rng = np.random.default_rng(7)
    for _ in range(20):
        shape = random_shape(rng)
        eta = rng.uniform(-math.pi / 2.0, math.pi / 2.0, 500)
        omega = rng.uniform(-math.pi, math.pi, 500)
        f = implicit_value(surface_point(eta, omega, shape), shape)
        assert np.max(np.abs(f)) <= 1e-6


def test_implicit_scaling_and_sign_symmetry():
    rng = np.random.default_rng(11)
    shape = random_shape(rng)
    pts = rng.uniform(-0.1, 0.1, (200, 3))
    k = 2.7
    scaled = SuperquadricShape(k * shape.a1, k * shape.a2, k * shape.a3, shape.eps1, shape.eps2)
    np.testing.assert_allclose(implicit_value(k * pts, scaled), implicit_value(pts, shape), rtol=1e-9, atol=1e-12)
    base = implicit_value(pts, shape)
    for signs in ([-1, 1, 1], [1, -1, 1], [1, 1, -1], [-1, -1, -1]):
        np.testing.assert_allclose(implicit_value(pts * np.array(signs), shape), base, rtol=1e-12, atol=1e-15)


class SurfaceNormalTests(SimpleTestCase):
    def test_sphere_normals(self):
        unit = SuperquadricShape(1.0, 1.0, 1.0, 1.0, 1.0)
        np.testing.assert_allclose(surface_normal([1.0, 0.0, 0.0], unit), [1.0, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(surface_normal([0.0, 0.0, 1.0], unit), [0.0, 0.0, 1.0], atol=1e-12)

    def test_degenerate_gradient_raises(self):
        boxy = SuperquadricShape(0.03, 0.03, 0.03, 0.1, 0.1)
        with self.assertRaises(DegenerateGradientError):
            surface_normal([0.0, 0.0, 0.0], boxy)

    def test_singular_sphere_centre_resolves_on_retry(self):
        unit = SuperquadricShape(1.0, 1.0, 1.0, 1.0, 1.0)
        n = surface_normal([0.0, 0.0, 0.0], unit, rng=np.random.default_rng(3))
        self.assertAlmostEqual(float(np.linalg.norm(n)), 1.0, places=9)


def test_normals_match_central_differences():
    rng = np.random.default_rng(21)
    h = 1e-6
    checked = 0
    while checked < 1000:
        shape = random_shape(rng, eps_lo=0.3)
        eta = rng.uniform(-1.4, 1.4)
        omega = rng.uniform(-math.pi, math.pi)
        if min(abs(math.sin(omega)), abs(math.cos(omega))) < 0.15 or abs(math.sin(eta)) < 0.15:
            continue
        p = surface_point(eta, omega, shape)
        fd = np.array([
            (implicit_value(p + h * e, shape) - implicit_value(p - h * e, shape)) / (2.0 * h)
            for e in np.eye(3)
        ])
        fd /= np.linalg.norm(fd)
        assert float(surface_normal(p, shape) @ fd) >= 1.0 - 1e-5
        checked += 1


# ---------------------------------------------------------------------
# Ray queries against the closed-form ellipsoid oracle
# ---------------------------------------------------------------------
def _ellipsoid_oracle(origin, direction, axes, pose):
    o = pose.apply_inverse(origin) / axes
    d = (pose.rotation.T @ direction) / axes
    a = float(d @ d)
    b = 2.0 * float(o @ d)
    c = float(o @ o) - 1.0
    disc = b * b - 4.0 * a * c
    return a, b, disc


def test_ray_intersect_matches_ellipsoid_oracle():
    rng = np.random.default_rng(5)
    hits = misses = 0
    while hits + misses < 1000:
        axes = rng.uniform(0.02, 0.08, 3)
        shape = SuperquadricShape(*axes, 1.0, 1.0)
        pose = random_pose(rng)
        away = rng.normal(size=3)
        origin = pose.position + 0.3 * away / np.linalg.norm(away)
        aim = pose.position + rng.uniform(-0.1, 0.1, 3)
        direction = (aim - origin) / np.linalg.norm(aim - origin)

        a, b, disc = _ellipsoid_oracle(origin, direction, axes, pose)
        got = ray_intersect(Ray(origin, direction), shape, pose)
        if disc > 0.0:
            chord = math.sqrt(disc) / a
            t0 = (-b - math.sqrt(disc)) / (2.0 * a)
            if chord < 4e-3 or t0 < 0.0:
                continue  # grazing or behind the origin
            assert got is not None
            assert abs(got - t0) <= 1e-5
            hits += 1
        else:
            # keep clear of tangency so the oracle is unambiguous
            if -disc / (4.0 * a) < 0.05:
                continue
            assert got is None
            misses += 1
    assert hits > 100 and misses > 100


class RayTests(SimpleTestCase):
    def test_direction_normalized(self):
        ray = Ray([0.0, 0.0, 1.0], [0.0, 0.0, -3.0])
        self.assertAlmostEqual(float(np.linalg.norm(ray.direction)), 1.0, places=12)
        with self.assertRaises(ValueError):
            Ray([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])

    def test_straight_down_onto_sphere(self):
        s = make_sphere(0.03)
        t = ray_intersect(Ray([0.0, 0.0, 0.5], [0.0, 0.0, -1.0]), s, Pose())
        self.assertAlmostEqual(t, 0.47, delta=1e-7)

    def test_ray_pointing_away_misses(self):
        s = make_sphere(0.03)
        self.assertIsNone(ray_intersect(Ray([0.0, 0.0, 0.5], [0.0, 0.0, 1.0]), s, Pose()))

    def test_batched_reports_nan_on_miss(self):
        s = make_sphere(0.03)
        origins = np.array([[0.0, 0.0, 0.5], [0.2, 0.0, 0.5]])
        dirs = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, -1.0]])
        t = ray_intersect_many(origins, dirs, s, Pose())
        self.assertAlmostEqual(t[0], 0.47, delta=1e-7)
        self.assertTrue(np.isnan(t[1]))


# ---------------------------------------------------------------------
# Poses
# ---------------------------------------------------------------------
class PoseTests(SimpleTestCase):
    def test_canonical_quaternion(self):
        p = Pose([-1.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(p.quat, [1.0, 0.0, 0.0, 0.0])

    def test_vector_encoding(self):
        p = Pose(quat_from_rotvec([0.1, -0.2, 0.3]), [0.1, 0.2, 0.3])
        v = p.as_vector()
        self.assertEqual(v.shape, (7,))
        np.testing.assert_array_equal(v[:3], [0.1, 0.2, 0.3])
        self.assertTrue(Pose.from_vector(v).allclose(p, atol=1e-15))

    def test_compose_inverse_and_rotation_oracle(self):
        rng = np.random.default_rng(2)
        a, b = random_pose(rng), random_pose(rng)
        self.assertTrue(a.compose(a.inverse()).allclose(Pose(), atol=1e-12))
        pts = rng.normal(size=(10, 3))
        np.testing.assert_allclose(a.compose(b).apply(pts), a.apply(b.apply(pts)), atol=1e-12)
        np.testing.assert_allclose(a.apply_inverse(a.apply(pts)), pts, atol=1e-12)
        w, x, y, z = a.quat
        np.testing.assert_allclose(a.rotation, Rotation.from_quat([x, y, z, w]).as_matrix(), atol=1e-12)


def test_pose_interpolate_endpoints_exact():
    rng = np.random.default_rng(4)
    x0, x1 = random_pose(rng), random_pose(rng)
    assert pose_interpolate(x0, x1, 0.0) == x0
    assert pose_interpolate(x0, x1, 1.0) == x1


def test_pose_interpolate_takes_short_arc():
    x0 = Pose(quat_from_rotvec([0.0, 0.0, 0.0]))
    # 350 degrees about z is the same as -10 degrees
    x1 = Pose(quat_from_rotvec([0.0, 0.0, math.radians(350.0)]))
    mid = pose_interpolate(x0, x1, 0.5)
    angle = 2.0 * math.degrees(math.acos(min(1.0, abs(mid.quat[0]))))
    assert angle == pytest.approx(5.0, abs=1e-6)


# ---------------------------------------------------------------------
# Support height / volume
# ---------------------------------------------------------------------
class SupportAndVolumeTests(SimpleTestCase):
    def test_sphere_support_height(self):
        s = make_sphere(0.03)
        self.assertAlmostEqual(support_height(s, quat_from_rotvec([0.4, 1.0, -0.2])), 0.03, places=12)

    def test_ellipsoid_lying_on_its_side(self):
        s = make_shape(0.02, 0.03, 0.07, 1.0, 1.0)
        self.assertAlmostEqual(support_height(s, Pose().quat), 0.07, places=12)
        self.assertAlmostEqual(support_height(s, quat_from_rotvec([math.pi / 2.0, 0.0, 0.0])), 0.03, places=12)

    def test_box_corner_down(self):
        box = SuperquadricShape(0.03, 0.03, 0.03, 0.1, 0.1)
        # a rotated near-box rests higher than its half-extent
        tilted = support_height(box, quat_from_rotvec([math.pi / 4.0, 0.0, 0.0]))
        self.assertGreater(tilted, 0.03 * 1.3)

    def test_sphere_volume(self):
        s = make_sphere(0.03)
        self.assertAlmostEqual(shape_volume(s), 4.0 / 3.0 * math.pi * 0.03 ** 3, delta=1e-12)
        self.assertAlmostEqual(s.volume(), shape_volume(s), places=15)

    def test_octahedron_volume(self):
        octa = SuperquadricShape(1.0, 1.0, 1.0, 2.0, 2.0)
        self.assertAlmostEqual(shape_volume(octa), 4.0 / 3.0, places=9)


def test_support_point_attains_the_support_value():
    rng = np.random.default_rng(21)
    for _ in range(30):
        shape = random_shape(rng, eps_lo=0.2, eps_hi=1.9)
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        x = support_point(shape, u)
        assert float(x @ u) == pytest.approx(support_value(shape, u), rel=1e-9)
        assert implicit_value(x, shape) == pytest.approx(0.0, abs=1e-6)


class SupportPointTests(SimpleTestCase):
    def test_sphere_point_is_along_the_direction(self):
        u = np.array([0.3, -0.4, -0.5])
        np.testing.assert_allclose(support_point(make_sphere(0.03), u), 0.03 * u / np.linalg.norm(u), atol=1e-15)

    def test_flat_face_gives_its_centre(self):
        box = SuperquadricShape(0.03, 0.04, 0.05, 0.1, 0.1)
        np.testing.assert_allclose(support_point(box, [0.0, 0.0, -1.0]), [0.0, 0.0, -0.05], atol=1e-15)

    def test_tilted_direction_on_a_box_reaches_toward_the_edge(self):
        box = SuperquadricShape(0.03, 0.04, 0.05, 0.1, 0.1)
        x = support_point(box, [0.15, 0.0, -1.0])
        self.assertGreater(x[0], 0.5 * 0.03)
        self.assertAlmostEqual(x[1], 0.0, places=15)


def test_support_height_never_below_surface_points():
    rng = np.random.default_rng(9)
    for _ in range(30):
        shape = random_shape(rng)
        q = quat_from_rotvec(rng.uniform(-1.0, 1.0, 3))
        eta, omega = np.meshgrid(np.linspace(-math.pi / 2, math.pi / 2, 41), np.linspace(-math.pi, math.pi, 80))
        pts = Pose(q).apply(surface_point(eta, omega, shape).reshape(-1, 3))
        h = support_height(shape, q)
        # the lowest sampled point sits at -h or just above it
        assert -h <= pts[:, 2].min() + 1e-12
        assert pts[:, 2].min() <= -h + 0.05 * h
