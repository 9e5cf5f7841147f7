"""Contact detection, penalty forces and per-part aggregation."""

import numpy as np
import pytest

from contactrank import arm, contacts
from contactrank.arm import JointState, planar_arm
from contactrank.contacts import (
    BodyPart,
    Contact,
    ContactSet,
    aggregate_force,
    detect_contacts,
    joint_space_contact_torque,
    penalty_force,
)
from contactrank.geometry import axis_angle_matrix, matrix_to_quat


@pytest.fixture()
def model():
    return planar_arm([0.6, 0.5], [1.0, 0.8], gravity=(0, 0, 0))


@pytest.fixture()
def state():
    return JointState(np.zeros(2), np.zeros(2))


class TestDetect:
    def test_far_world_is_empty(self, model, state):
        world = [BodyPart("s", "sphere", np.array([5.0, 5.0, 0.0]), radius=0.2)]
        assert detect_contacts(model, state, world).contacts == []

    def test_sphere_on_link_axis_point(self, model, state):
        # sphere center 0.05 above the link-1 axis at x=0.3; link radius 0.04
        world = [BodyPart("s", "sphere", np.array([0.3, 0.05, 0.0]), radius=0.03)]
        cs = detect_contacts(model, state, world)
        assert len(cs.contacts) == 1
        c = cs.contacts[0]
        assert c.link_index == 0
        # closed-form capsule-sphere penetration: r_link + r_sphere - distance
        assert c.penetration_depth == pytest.approx(0.04 + 0.03 - 0.05, abs=1e-12)
        np.testing.assert_allclose(c.normal, [0.0, -1.0, 0.0], atol=1e-12)
        assert abs(np.linalg.norm(c.normal) - 1.0) < 1e-9

    def test_two_spheres_two_links(self, model, state):
        world = [
            BodyPart("a", "sphere", np.array([0.3, 0.05, 0.0]), radius=0.03),
            BodyPart("b", "sphere", np.array([0.9, -0.05, 0.0]), radius=0.03),
        ]
        cs = detect_contacts(model, state, world)
        assert {(c.body_part_id, c.link_index) for c in cs.contacts} == {("a", 0), ("b", 1)}

    def test_capsule_part(self, model, state):
        world = [BodyPart("c", "capsule", np.array([0.2, 0.06, -0.5]),
                          np.array([0.2, 0.06, 0.5]), radius=0.03)]
        cs = detect_contacts(model, state, world)
        assert len(cs.contacts) == 1
        assert cs.contacts[0].penetration_depth == pytest.approx(0.07 - 0.06, abs=1e-12)

    def test_frame_independence(self, model, state):
        world = [BodyPart("s", "sphere", np.array([0.3, 0.05, 0.0]), radius=0.03)]
        cs0 = detect_contacts(model, state, world)

        Rw = axis_angle_matrix(np.array([0.3, -0.5, 0.8]), 1.1)
        tw = np.array([0.4, -0.2, 0.7])
        moved = arm.ArmModel(joints=model.joints, links=model.links,
                             gravity=model.gravity, base_position=tw,
                             base_quat=matrix_to_quat(Rw))
        world2 = [BodyPart("s", "sphere", Rw @ world[0].a + tw, radius=0.03)]
        cs1 = detect_contacts(moved, state, world2)
        assert len(cs1.contacts) == len(cs0.contacts) == 1
        a, b = cs0.contacts[0], cs1.contacts[0]
        assert a.penetration_depth == pytest.approx(b.penetration_depth, abs=1e-12)
        np.testing.assert_allclose(Rw @ a.normal, b.normal, atol=1e-10)
        np.testing.assert_allclose(Rw @ a.point + tw, b.point, atol=1e-10)


class TestPenaltyForce:
    def _contact(self, depth):
        return Contact("s", 0, np.zeros(3), np.array([0.0, 1.0, 0.0]),
                       np.zeros(3), depth)

    def test_zero_depth_zero_force(self):
        f = penalty_force(self._contact(0.0), np.zeros(3), 1000.0, 50.0)
        np.testing.assert_array_equal(f, np.zeros(3))

    def test_spring_term_arithmetic(self):
        f = penalty_force(self._contact(0.01), np.zeros(3), 1000.0, 50.0)
        np.testing.assert_allclose(f, [0.0, 10.0, 0.0], atol=1e-12)

    def test_separating_velocity_clamps_at_zero(self):
        # link flying away from the body at 10 m/s along the normal
        f = penalty_force(self._contact(0.001), np.array([0.0, 10.0, 0.0]), 1000.0, 50.0)
        np.testing.assert_array_equal(f, np.zeros(3))

    def test_never_adhesive_random(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            c = self._contact(float(rng.uniform(0, 0.02)))
            f = penalty_force(c, rng.normal(size=3) * 5, 2000.0, 50.0)
            assert f @ c.normal >= 0.0


class TestAggregate:
    def _cs(self, mags):
        cons = [Contact("b", 0, np.zeros(3), np.array([0, 0, 1.0]),
                        np.array([0.0, 0.0, m]), 0.001) for m in mags]
        return ContactSet(cons)

    def test_empty_is_zero(self):
        part = BodyPart("b", "sphere", np.zeros(3), radius=0.1)
        assert aggregate_force(ContactSet([]), part) == 0.0

    def test_max_rule(self):
        part = BodyPart("b", "sphere", np.zeros(3), radius=0.1)
        assert aggregate_force(self._cs([3.0, 7.0]), part) == pytest.approx(7.0)

    def test_single_contact(self):
        part = BodyPart("b", "sphere", np.zeros(3), radius=0.1)
        assert aggregate_force(self._cs([5.0]), part) == pytest.approx(5.0)

    def test_monotone_under_added_contacts(self):
        part = BodyPart("b", "sphere", np.zeros(3), radius=0.1)
        rng = np.random.default_rng(12)
        mags = []
        prev = 0.0
        for _ in range(20):
            mags.append(float(rng.uniform(0, 30)))
            cur = aggregate_force(self._cs(mags), part)
            assert cur >= prev
            prev = cur


class TestContactTorque:
    def test_empty_set_zero(self, model, state):
        np.testing.assert_array_equal(
            joint_space_contact_torque(model, state, ContactSet([])), np.zeros(2))

    def test_virtual_work_identity(self, model, state):
        # tau = J^T f: joint power equals contact-point power for any qdot
        world = [BodyPart("s", "sphere", np.array([0.3, 0.05, 0.0]), radius=0.03)]
        cs = detect_contacts(model, state, world)
        cs = contacts.contact_forces(model, state, cs, world, 2000.0, 0.0)
        c = cs.contacts[0]
        tau = joint_space_contact_torque(model, state, cs)
        rng = np.random.default_rng(13)
        for _ in range(10):
            qd = rng.normal(size=2)
            J = arm.point_jacobian_world(model, state, c.link_index, c.point)
            assert tau @ qd == pytest.approx((J @ qd) @ c.force, abs=1e-10)
        # force pushes the arm away from penetration: positive along the normal
        assert c.force @ c.normal > 0

    def test_superposition(self, model, state):
        world = [
            BodyPart("a", "sphere", np.array([0.3, 0.05, 0.0]), radius=0.03),
            BodyPart("b", "sphere", np.array([0.9, -0.05, 0.0]), radius=0.03),
        ]
        cs = detect_contacts(model, state, world)
        cs = contacts.contact_forces(model, state, cs, world, 2000.0, 10.0)
        total = joint_space_contact_torque(model, state, cs)
        parts = np.zeros(2)
        for c in cs.contacts:
            parts += joint_space_contact_torque(model, state, ContactSet([c]))
        np.testing.assert_allclose(total, parts, atol=1e-12)
