"""Dynamics and kinematics oracles for the arm model.

Expected values come from independent routes: hand-derived planar formulas,
finite differences of energies, and conservation laws.
"""

import numpy as np
import pytest

from contactrank import arm
from contactrank.arm import ArmModel, InvalidStateError, JointState, planar_arm, seven_dof_arm


def planar_two_link_tip_mass_M(q2_rel, m1=1.0, m2=1.0, l1=1.0, l2=1.0):
    """Textbook planar 2R inertia matrix with point masses at the link tips.

    q2_rel is the relative angle between the links (mount offset included).
    """
    c2 = np.cos(q2_rel)
    m11 = m1 * l1**2 + m2 * (l1**2 + l2**2 + 2 * l1 * l2 * c2)
    m12 = m2 * (l2**2 + l1 * l2 * c2)
    m22 = m2 * l2**2
    return np.array([[m11, m12], [m12, m22]])


def fd_mass_matrix(model, state, h=1e-5):
    """M from central differences of kinetic energy in qdot."""
    n = model.n
    M = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            def T(di, dj):
                qd = state.qdot.copy()
                qd[i] += di
                qd[j] += dj
                return arm.kinetic_energy(model, JointState(state.q, qd))
            M[i, j] = (T(h, h) - T(h, -h) - T(-h, h) + T(-h, -h)) / (4 * h * h)
    return M


def fd_point_jacobian(model, state, link, point_local, h=1e-6):
    n = model.n
    J = np.zeros((3, n))
    for j in range(n):
        qp = state.q.copy(); qp[j] += h
        qm = state.q.copy(); qm[j] -= h
        Rp, pp, _ = arm.fk(model, JointState(qp, np.zeros(n)))
        Rm, pm, _ = arm.fk(model, JointState(qm, np.zeros(n)))
        xp = pp[link] + Rp[link] @ point_local
        xm = pm[link] + Rm[link] @ point_local
        J[:, j] = (xp - xm) / (2 * h)
    return J


@pytest.fixture(scope="module")
def two_link():
    # second link mounted 90 deg off so q=[0,0] has perpendicular links
    return planar_arm([1.0, 1.0], [1.0, 1.0], tip_masses=True,
                      mount_rpy=[[0, 0, 0], [0, 0, np.pi / 2]])


@pytest.fixture(scope="module")
def arm7():
    return seven_dof_arm()


class TestMassMatrix:
    def test_two_link_hand_value(self, two_link):
        # relative angle at q=[0,0] is pi/2 -> cos term vanishes
        s = JointState(np.zeros(2), np.zeros(2))
        M = arm.mass_matrix(two_link, s)
        expected = planar_two_link_tip_mass_M(np.pi / 2)
        assert np.allclose(expected, [[3, 1], [1, 1]])
        np.testing.assert_allclose(M, expected, atol=1e-8)

    def test_two_link_random_angles(self, two_link):
        rng = np.random.default_rng(0)
        for _ in range(20):
            q = rng.uniform(-np.pi, np.pi, 2)
            M = arm.mass_matrix(two_link, JointState(q, np.zeros(2)))
            np.testing.assert_allclose(
                M, planar_two_link_tip_mass_M(q[1] + np.pi / 2), atol=1e-8)

    def test_matches_kinetic_energy_fd(self, arm7):
        rng = np.random.default_rng(1)
        for _ in range(5):
            s = JointState(rng.uniform(-1.5, 1.5, 7), rng.uniform(-1, 1, 7))
            M = arm.mass_matrix(arm7, s)
            # second-difference oracle carries ~1e-6 roundoff of its own
            np.testing.assert_allclose(M, fd_mass_matrix(arm7, s), rtol=1e-4, atol=1e-5)

    def test_symmetry_and_pd(self, arm7):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            q = rng.uniform(-2.5, 2.5, 7)
            M = arm.mass_matrix(arm7, JointState(q, np.zeros(7)))
            assert np.max(np.abs(M - M.T)) < 1e-12
            x = rng.standard_normal(7)
            assert x @ M @ x > 0

    def test_rejects_nonfinite_state(self, arm7):
        s = JointState(np.full(7, np.nan), np.zeros(7))
        with pytest.raises(InvalidStateError):
            arm.mass_matrix(arm7, s)


class TestBiasForces:
    def test_zero_velocity_bias_is_gravity(self, arm7):
        rng = np.random.default_rng(3)
        for _ in range(10):
            s = JointState(rng.uniform(-2, 2, 7), np.zeros(7))
            np.testing.assert_allclose(
                arm.bias_forces(arm7, s), arm.gravity_torque(arm7, s), atol=1e-12)

    def test_zero_gravity_zero_velocity_bias_vanishes(self):
        m = planar_arm([0.5, 0.4, 0.3], [1.0, 0.8, 0.5], gravity=(0, 0, 0))
        s = JointState(np.array([0.3, -0.7, 1.1]), np.zeros(3))
        np.testing.assert_allclose(arm.bias_forces(m, s), np.zeros(3), atol=1e-12)

    def test_gravity_matches_potential_gradient(self, arm7):
        rng = np.random.default_rng(4)
        h = 1e-6
        for _ in range(5):
            q = rng.uniform(-2, 2, 7)
            g = arm.gravity_torque(arm7, JointState(q, np.zeros(7)))
            for j in range(7):
                qp = q.copy(); qp[j] += h
                qm = q.copy(); qm[j] -= h
                dV = (arm.potential_energy(arm7, JointState(qp, np.zeros(7)))
                      - arm.potential_energy(arm7, JointState(qm, np.zeros(7)))) / (2 * h)
                assert abs(g[j] - dV) < 1e-5

    def test_power_balance_identity(self, arm7):
        # qd^T c(q, qd) == d/dt(0.5 qd^T M qd) at fixed qd, via FD on M
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(10):
            q = rng.uniform(-2, 2, 7)
            qd = rng.uniform(-1.5, 1.5, 7)
            c = arm.coriolis_forces(arm7, JointState(q, qd))
            Mp = arm.mass_matrix(arm7, JointState(q + h * qd, np.zeros(7)))
            Mm = arm.mass_matrix(arm7, JointState(q - h * qd, np.zeros(7)))
            Mdot = (Mp - Mm) / (2 * h)
            residual = abs(qd @ c - 0.5 * qd @ Mdot @ qd)
            assert residual < 1e-6 * (1.0 + abs(qd @ c))


class TestJacobians:
    def test_single_link_analytic(self):
        m = planar_arm([0.8, 0.8], [1.0, 1.0])
        s = JointState(np.zeros(2), np.zeros(2))
        J = arm.point_jacobian(m, s, 0, np.array([0.8, 0.0, 0.0]))
        # rotation about z, point at distance L along x: velocity along +y
        np.testing.assert_allclose(J[:, 0], [0.0, 0.8, 0.0], atol=1e-12)

    def test_zero_velocity_zero_point_velocity(self, arm7):
        s = JointState(np.random.default_rng(6).uniform(-1, 1, 7), np.zeros(7))
        J = arm.point_jacobian(arm7, s, 4, np.array([0.0, 0.0, 0.1]))
        np.testing.assert_allclose(J @ s.qdot, np.zeros(3), atol=1e-15)

    def test_matches_finite_differences(self, arm7):
        rng = np.random.default_rng(7)
        for _ in range(10):
            s = JointState(rng.uniform(-2, 2, 7), np.zeros(7))
            link = int(rng.integers(0, 7))
            pt = rng.uniform(-0.1, 0.2, 3)
            J = arm.point_jacobian(arm7, s, link, pt)
            Jfd = fd_point_jacobian(arm7, s, link, pt)
            err = np.linalg.norm(J - Jfd) / (1.0 + np.linalg.norm(Jfd))
            assert err < 1e-6

    def test_ee_jacobian_linear_rows_match_point_jacobian(self, arm7):
        s = JointState(np.random.default_rng(8).uniform(-1, 1, 7), np.zeros(7))
        J6 = arm.ee_jacobian(arm7, s)
        Jp = arm.point_jacobian(arm7, s, 6, arm7.ee_offset)
        np.testing.assert_allclose(J6[:3], Jp, atol=1e-12)

    def test_out_of_range_link(self, arm7):
        s = JointState(np.zeros(7), np.zeros(7))
        with pytest.raises(IndexError):
            arm.point_jacobian(arm7, s, 9, np.zeros(3))


class TestStep:
    def test_rest_stays_at_rest_without_forces(self):
        m = planar_arm([0.5, 0.5], [1.0, 1.0], gravity=(0, 0, 0))
        s = JointState(np.array([0.2, -0.4]), np.zeros(2))
        s2 = arm.step(m, s, np.zeros(2), 1e-3)
        np.testing.assert_array_equal(s2.q, s.q)
        np.testing.assert_array_equal(s2.qdot, s.qdot)

    def test_gravity_accelerates_horizontal_arm_downward(self):
        m = planar_arm([0.5, 0.5], [1.0, 1.0])  # gravity -y, links along +x
        s = JointState(np.zeros(2), np.zeros(2))
        s2 = arm.step(m, s, np.zeros(2), 1e-3)
        assert s2.qdot[0] < 0  # arm swings down

    def test_deterministic(self):
        m = seven_dof_arm()
        s = JointState(np.full(7, 0.3), np.full(7, 0.1))
        tau = np.linspace(-1, 1, 7)
        a = arm.step(m, s, tau, 1e-3)
        b = arm.step(m, s, tau, 1e-3)
        assert np.array_equal(a.q, b.q) and np.array_equal(a.qdot, b.qdot)

    def test_dt_validation(self):
        m = planar_arm([0.5, 0.5], [1.0, 1.0])
        s = JointState(np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            arm.step(m, s, np.zeros(2), 0.02)

    def test_passive_pendulum_energy_drift(self):
        # conservative system: total energy drift < 1% over 10 s at dt=1e-3,
        # measured against the energy above the hanging rest state
        m = planar_arm([0.6, 0.5], [1.2, 0.9])
        s = JointState(np.array([-np.pi / 2 + 0.4, 0.1]), np.zeros(2))
        e0 = arm.kinetic_energy(m, s) + arm.potential_energy(m, s)
        rest = JointState(np.array([-np.pi / 2, 0.0]), np.zeros(2))
        scale = e0 - arm.potential_energy(m, rest)
        assert scale > 0
        for _ in range(10000):
            s = arm.step(m, s, np.zeros(2), 1e-3)
        e = arm.kinetic_energy(m, s) + arm.potential_energy(m, s)
        assert abs(e - e0) < 0.01 * scale
