"""Hierarchy controller: priority consistency, reductions, closed-loop force."""

import numpy as np
import pytest

from contactrank import arm, contacts, hosc
from contactrank.arm import JointState, Pose, planar_arm, seven_dof_arm
from contactrank.contacts import BodyPart, Contact, ContactSet, detect_contacts
from contactrank.geometry import matrix_to_quat
from contactrank.hosc import (
    ControllerParams,
    ForceReg,
    Hierarchy,
    InactiveObjectiveError,
    PoseTrack,
    compute_torques,
    desired_acceleration,
    task_jacobian,
)


def random_pose_target(model, rng):
    q = rng.uniform(-1.2, 1.2, model.n)
    return arm.ee_pose(model, JointState(q, np.zeros(model.n)))


def fake_contact(model, state, link, rng):
    """A synthetic contact on a link midpoint with a random normal."""
    R, p, z = arm.fk(model, state)
    mid = p[link] + R[link] @ (0.5 * (model._cap_p0[link] + model._cap_p1[link]))
    nrm = rng.normal(size=3)
    nrm /= np.linalg.norm(nrm)
    return Contact(f"part{link}", link, mid, nrm, 8.0 * nrm, 0.004)


def force_objective_from_contact(c, threshold=5.0, gain=0.05):
    return ForceReg(c.body_part_id, threshold, gain, c.link_index,
                    c.point, c.normal, float(np.linalg.norm(c.force)))


class TestDesiredAcceleration:
    def test_pose_at_target_is_zero(self):
        m = seven_dof_arm()
        s = JointState(np.full(7, 0.4), np.zeros(7))
        obj = PoseTrack(arm.ee_pose(m, s), kp=np.full(6, 100.0), kd=np.full(6, 20.0))
        acc = desired_acceleration(obj, m, s, ContactSet([]))
        np.testing.assert_allclose(acc, np.zeros(6), atol=1e-9)

    def test_force_at_threshold_is_zero(self):
        m = seven_dof_arm()
        s = JointState(np.full(7, 0.4), np.zeros(7))
        c = fake_contact(m, s, 3, np.random.default_rng(0))
        obj = force_objective_from_contact(c, threshold=np.linalg.norm(c.force))
        acc = desired_acceleration(obj, m, s, ContactSet([c]))
        np.testing.assert_allclose(acc, [0.0], atol=1e-12)

    def test_force_excess_arithmetic(self):
        m = seven_dof_arm()
        s = JointState(np.full(7, 0.4), np.zeros(7))
        c = fake_contact(m, s, 3, np.random.default_rng(1))
        c.force = 20.0 * c.normal
        obj = force_objective_from_contact(c, threshold=10.0, gain=0.05)
        acc = desired_acceleration(obj, m, s, ContactSet([c]))
        # -Kf (f - fmax) = -0.5 in pressing coordinates: a retreat command
        assert acc[0] == pytest.approx(-0.5, abs=1e-12)

    def test_inactive_force_objective_raises(self):
        m = seven_dof_arm()
        s = JointState(np.full(7, 0.4), np.zeros(7))
        c = fake_contact(m, s, 3, np.random.default_rng(2))
        obj = force_objective_from_contact(c)
        with pytest.raises(InactiveObjectiveError):
            desired_acceleration(obj, m, s, ContactSet([]))


class TestHierarchyValidation:
    def test_duplicate_parts_rejected(self):
        c = Contact("x", 0, np.zeros(3), np.array([0, 0, 1.0]), np.zeros(3), 0.0)
        o1 = force_objective_from_contact(c)
        o2 = force_objective_from_contact(c)
        with pytest.raises(ValueError):
            Hierarchy([o1, o2])

    def test_two_pose_objectives_rejected(self):
        m = seven_dof_arm()
        s = JointState(np.zeros(7), np.zeros(7))
        p = arm.ee_pose(m, s)
        obj = PoseTrack(p, np.full(6, 100.0), np.full(6, 20.0))
        with pytest.raises(ValueError):
            Hierarchy([obj, PoseTrack(p, np.full(6, 100.0), np.full(6, 20.0))])


def single_task_osc(model, state, J, xdd):
    """Independently coded one-task operational space controller."""
    M = arm.mass_matrix(model, state)
    minv = np.linalg.inv(M)
    g = arm.gravity_torque(model, state)
    cor = arm.bias_forces(model, state) - g
    lam = np.linalg.inv(J @ minv @ J.T)
    F = lam @ (xdd + J @ minv @ cor)
    return g + J.T @ F


class TestComputeTorques:
    def test_single_pose_at_target_rest_is_gravity(self):
        m = seven_dof_arm()
        s = JointState(np.full(7, 0.5), np.zeros(7))
        obj = PoseTrack(arm.ee_pose(m, s), np.full(6, 100.0), np.full(6, 20.0))
        tau = compute_torques(m, s, Hierarchy([obj]), ContactSet([]))
        np.testing.assert_allclose(tau, arm.gravity_torque(m, s), atol=1e-8)

    def test_single_task_matches_reference_osc(self):
        m = seven_dof_arm()
        rng = np.random.default_rng(3)
        params = ControllerParams(nullspace_damping=0.0, torque_limit=1e9)
        for _ in range(10):
            s = JointState(rng.uniform(-1.2, 1.2, 7), rng.uniform(-0.5, 0.5, 7))
            obj = PoseTrack(random_pose_target(m, rng), np.full(6, 100.0), np.full(6, 20.0))
            tau = compute_torques(m, s, Hierarchy([obj]), ContactSet([]), params)
            J = task_jacobian(obj, m, s)
            xdd = desired_acceleration(obj, m, s, ContactSet([]))
            ref = single_task_osc(m, s, J, xdd)
            np.testing.assert_allclose(tau, ref, rtol=1e-8, atol=1e-8)

    def test_two_level_non_interference(self):
        m = seven_dof_arm()
        rng = np.random.default_rng(4)
        for _ in range(25):
            s = JointState(rng.uniform(-1.2, 1.2, 7), rng.uniform(-0.5, 0.5, 7))
            c = fake_contact(m, s, int(rng.integers(2, 6)), rng)
            hi = Hierarchy([
                force_objective_from_contact(c),
                PoseTrack(random_pose_target(m, rng), np.full(6, 100.0), np.full(6, 20.0)),
            ])
            cs = ContactSet([c])
            tau, diag = compute_torques(m, s, hi, cs, diagnostics=True)
            J1 = diag.projected_jacobians[0]
            t2 = diag.contributions[1]
            leak = np.linalg.norm(J1 @ diag.minv @ t2)
            assert leak < 1e-6 * (1.0 + np.linalg.norm(t2))

    def test_projector_idempotent_and_dynamically_consistent(self):
        # strictness holds away from singularities: skip draws where any
        # level's projected task inertia is nearly rank-deficient
        m = seven_dof_arm()
        rng = np.random.default_rng(5)
        checked = 0
        while checked < 10:
            s = JointState(rng.uniform(-1.2, 1.2, 7), np.zeros(7))
            c = fake_contact(m, s, 4, rng)
            hi = Hierarchy([
                force_objective_from_contact(c),
                PoseTrack(random_pose_target(m, rng), np.full(6, 100.0), np.full(6, 20.0)),
            ])
            _, diag = compute_torques(m, s, hi, ContactSet([c]), diagnostics=True)
            if min(diag.task_eig_min) < 1e-2:
                continue
            checked += 1
            N = diag.final_projector
            np.testing.assert_allclose(N @ N, N, atol=1e-9)
            # lower-priority torques filtered by N^T cause no task-1 motion
            J1 = diag.projected_jacobians[0]
            residual = J1 @ diag.minv @ N.T
            assert np.max(np.abs(residual)) < 1e-8

    def test_force_excess_retreats_contact_point(self):
        # controller torque plus the physical contact reaction accelerates
        # the contact point along +normal, away from the body part
        m = seven_dof_arm()
        rng = np.random.default_rng(6)
        for _ in range(10):
            s = JointState(rng.uniform(-1.0, 1.0, 7), np.zeros(7))
            c = fake_contact(m, s, int(rng.integers(2, 6)), rng)
            c.force = 20.0 * c.normal
            obj = force_objective_from_contact(c, threshold=10.0)
            params = ControllerParams(nullspace_damping=0.0)
            tau, diag = compute_torques(m, s, Hierarchy([obj]), ContactSet([c]),
                                        params, diagnostics=True)
            Jp = arm.point_jacobian_world(m, s, c.link_index, c.point)
            qdd = diag.minv @ (diag.contributions[0] + Jp.T @ c.force)
            assert (Jp @ qdd) @ c.normal > 0

    def test_empty_hierarchy_rejected(self):
        m = seven_dof_arm()
        s = JointState(np.zeros(7), np.zeros(7))
        with pytest.raises(ValueError):
            compute_torques(m, s, Hierarchy([]), ContactSet([]))


class TestClosedLoopForce:
    def test_force_converges_to_threshold(self):
        # single static contact, force-only hierarchy: |f - fmax| < 0.5 N
        # within 2 s of simulated time
        model = planar_arm([0.5, 0.4, 0.3], [1.2, 1.0, 0.8], gravity=(0, 0, 0))
        world = [BodyPart("ball", "sphere", np.array([0.7, 0.06, 0.0]), radius=0.03)]
        stiffness, damping = 2000.0, 200.0
        fmax = 5.0
        state = JointState(np.zeros(3), np.zeros(3))
        params = ControllerParams()
        f = 0.0
        for i in range(2000):
            cs = detect_contacts(model, state, world, timestamp=i * 1e-3)
            cs = contacts.contact_forces(model, state, cs, world, stiffness, damping)
            tau_ext = contacts.joint_space_contact_torque(model, state, cs)
            if cs.contacts:
                c = max(cs.contacts, key=lambda x: np.linalg.norm(x.force))
                f = float(np.linalg.norm(c.force))
                obj = ForceReg("ball", fmax, 0.05, c.link_index, c.point, c.normal, f)
                tau = compute_torques(model, state, Hierarchy([obj]), cs, params)
            else:
                f = 0.0
                tau = arm.gravity_torque(model, state) - 2.0 * state.qdot
            state = arm.step(model, state, tau, 1e-3, tau_ext=tau_ext)
        assert abs(f - fmax) < 0.5
