# sim/tests/test_skill.py
from __future__ import annotations

import math

import numpy as np
import pytest
from django.test import SimpleTestCase

from core.enums import GraspAxis
from core.errors import TrajectoryIndexError, UnreachableGraspError
from sim.services.geometry import Pose, implicit_value
from sim.services.hand import default_hand, fingertip_positions
from sim.services.physics import place_hand, reset, step
from sim.services.skill import (
    ReferenceTrajectory,
    SkillParam,
    approach_direction,
    compose_action,
    lift_reference,
    make_reference,
    plan_grasp,
    pregrasp_pose,
    reference_at,
    residual_bounds,
    transform_reference,
)
from sim.tests.factories import make_shape, make_sphere, random_shape, shorter_axis, top_down, yaw_pose

RESTING_SPHERE = Pose(position=(0.0, 0.0, 0.03))


class SkillParamTests(SimpleTestCase):
    def test_validation(self):
        with self.assertRaises(ValueError):
            SkillParam(0.0, 0.0)
        with self.assertRaises(ValueError):
            SkillParam(1.0, 0.0, standoff=0.3)

    def test_dict_round_trip(self):
        z = SkillParam(1.3, 2.0, GraspAxis.Y, 0.12)
        self.assertEqual(SkillParam.from_dict(z.to_dict()), z)

    def test_top_down_approach(self):
        np.testing.assert_allclose(approach_direction(top_down()), [0.0, 0.0, 1.0], atol=1e-12)

    def test_tilted_approach_is_unit(self):
        d = approach_direction(SkillParam(math.radians(75.0), 0.4))
        self.assertAlmostEqual(float(np.linalg.norm(d)), 1.0, places=12)
        self.assertGreater(d[2], 0.9)


class PlanGraspTests(SimpleTestCase):
    def setUp(self):
        self.hand = default_hand()

    def test_sphere_contacts_are_antipodal(self):
        plan = plan_grasp(make_sphere(0.03), RESTING_SPHERE, top_down(), self.hand)
        np.testing.assert_allclose(plan.contacts[self.hand.thumb_index], [-0.03, 0.0, 0.0], atol=1e-3)
        np.testing.assert_allclose(plan.contacts[self.hand.opposing_index], [0.03, 0.0, 0.0], atol=1e-3)

    def test_sphere_plan_reaches_targets(self):
        plan = plan_grasp(make_sphere(0.03), RESTING_SPHERE, top_down(), self.hand)
        self.assertLessEqual(plan.residual, 0.003)
        tips = fingertip_positions(plan.grasp, self.hand)
        err = np.linalg.norm(tips - RESTING_SPHERE.apply(plan.tip_targets), axis=1)
        self.assertLessEqual(float(err.max()), 0.003)

    def test_palm_faces_down_for_top_down_approach(self):
        plan = plan_grasp(make_sphere(0.03), RESTING_SPHERE, top_down(), self.hand)
        np.testing.assert_allclose(plan.grasp.palm.rotate([0.0, 0.0, 1.0]), [0.0, 0.0, -1.0], atol=1e-9)
        self.assertGreater(plan.grasp.palm.position[2], 0.03)

    def test_oversized_object_is_unreachable(self):
        with self.assertRaises(UnreachableGraspError):
            plan_grasp(make_shape(0.06, 0.06, 0.075), Pose(position=(0.0, 0.0, 0.075)), top_down(), self.hand)


def _contact_checks(rng, n):
    hand = default_hand()
    planned = 0
    for _ in range(n):
        shape = random_shape(rng)
        z = SkillParam(math.pi / 2.0, 0.0, shorter_axis(shape), 0.1)
        pose = yaw_pose(float(rng.uniform(0.0, 2.0 * math.pi)), 0.0, 0.0)
        try:
            plan = plan_grasp(shape, pose, z, hand)
        except UnreachableGraspError:
            continue
        planned += 1
        assert np.max(np.abs(implicit_value(plan.contacts, shape))) <= 1e-6
        thumb_n = plan.normals[hand.thumb_index]
        for i in range(hand.finger_count):
            if i != hand.thumb_index:
                assert float(thumb_n @ plan.normals[i]) < -0.3
    return planned


def test_contacts_on_surface_and_opposed():
    assert _contact_checks(np.random.default_rng(11), 25) > 0


@pytest.mark.slow
def test_contacts_on_surface_and_opposed_many_shapes():
    assert _contact_checks(np.random.default_rng(12), 500) > 100


class ReferenceTests(SimpleTestCase):
    def setUp(self):
        self.hand = default_hand()
        self.plan, self.traj = make_reference(make_sphere(0.03), RESTING_SPHERE, top_down(), self.hand)

    def test_pregrasp_backs_off_along_approach(self):
        x0 = pregrasp_pose(self.plan.grasp, top_down(standoff=0.12), self.hand)
        np.testing.assert_allclose(x0.palm.position - self.plan.grasp.palm.position, [0.0, 0.0, 0.12], atol=1e-12)
        np.testing.assert_allclose(x0.joints, self.hand.opening(0.2))

    def test_endpoints_exact(self):
        self.assertIs(reference_at(self.traj, 0), self.traj.x0)
        self.assertIs(reference_at(self.traj, self.traj.horizon), self.traj.xg)

    def test_midpoint(self):
        mid = reference_at(self.traj, self.traj.horizon // 2)
        expected = 0.5 * (self.traj.x0.palm.position + self.traj.xg.palm.position)
        np.testing.assert_allclose(mid.palm.position, expected, atol=1e-12)

    def test_out_of_range(self):
        with self.assertRaises(TrajectoryIndexError):
            reference_at(self.traj, -1)
        with self.assertRaises(TrajectoryIndexError):
            reference_at(self.traj, self.traj.horizon + 1)

    def test_short_horizon_rejected(self):
        with self.assertRaises(ValueError):
            ReferenceTrajectory(self.traj.x0, self.traj.xg, 1)

    def test_lift_reference(self):
        xg = self.traj.xg
        self.assertIs(lift_reference(xg, 0), xg)
        top = lift_reference(xg, 25)
        np.testing.assert_allclose(top.palm.position - xg.palm.position, [0.0, 0.0, 0.15], atol=1e-12)
        np.testing.assert_array_equal(top.joints, xg.joints)
        with self.assertRaises(TrajectoryIndexError):
            lift_reference(xg, 26)

    def test_transform_reference_is_equivariant(self):
        t_obj = Pose(yaw_pose(0.8).quat, (0.05, -0.03, 0.0))
        moved = transform_reference(self.traj, t_obj)
        for t in (0, 7, 25, self.traj.horizon):
            a = reference_at(moved, t).palm
            b = t_obj.compose(reference_at(self.traj, t).palm)
            self.assertTrue(a.allclose(b, atol=1e-9))


def test_compose_action_clamps_residual_and_joints():
    hand = default_hand()
    _, traj = make_reference(make_sphere(0.03), RESTING_SPHERE, top_down(), hand)
    xg = traj.xg
    action = compose_action(xg, xg, np.full(14, 5.0), hand)
    bounds = residual_bounds(hand)
    np.testing.assert_allclose(action.delta_palm, bounds[:6], atol=1e-12)
    np.testing.assert_allclose(action.target_joints, np.clip(xg.joints + bounds[6:], hand.lower, hand.upper))


def test_zero_residual_rollout_tracks_reference_without_contact():
    hand = default_hand()
    _, traj = make_reference(make_sphere(0.03), RESTING_SPHERE, top_down(), hand)
    # the object sits far away so the hand moves freely
    state = place_hand(reset(make_sphere(0.03), yaw_pose(0.0, 1.0, 1.0), hand_model=hand), traj.x0)
    for t in range(traj.horizon):
        action = compose_action(reference_at(traj, t), reference_at(traj, t + 1), np.zeros(14), hand)
        state = step(state, action)
    assert state.hand.palm.allclose(traj.xg.palm, atol=1e-6)
    np.testing.assert_allclose(state.hand.joints, traj.xg.joints, atol=1e-6)
