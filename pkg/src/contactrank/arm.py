"""Serial-arm model: capsule links, revolute joints, dynamics and kinematics.

The model is generic in the number of joints. Two factory configurations are
provided: a planar arm (analytically checkable) and a 7-DoF spatial arm used
by the larger scenarios. Inertial parameters of the 7-DoF arm are plausible
placeholders, not measurements of any particular hardware.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import matrix_to_quat, quat_normalize, quat_to_matrix, rpy_matrix


class InvalidStateError(ValueError):
    """Joint state is non-finite or incompatible with the model."""


@dataclass
class JointSpec:
    axis: np.ndarray                 # unit axis in the joint frame
    origin_xyz: np.ndarray           # offset from parent link frame, m
    origin_rpy: np.ndarray           # fixed rotation from parent link frame, rad
    q_min: float = -10.0
    q_max: float = 10.0
    qd_max: float = 50.0


@dataclass
class LinkSpec:
    mass: float                      # kg
    com: np.ndarray                  # COM offset in link frame, m
    inertia: np.ndarray              # 3x3 about COM in link frame, kg m^2
    capsule_p0: np.ndarray           # capsule endpoints in link frame, m
    capsule_p1: np.ndarray
    capsule_radius: float            # m


@dataclass
class Pose:
    position: np.ndarray
    quat: np.ndarray                 # unit, (w, x, y, z)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.quat = np.asarray(self.quat, dtype=float)
        if abs(np.linalg.norm(self.quat) - 1.0) > 1e-9:
            raise ValueError("quaternion must be unit")

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)


@dataclass
class JointState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)

    def copy(self) -> "JointState":
        return JointState(self.q.copy(), self.qdot.copy())


@dataclass
class ArmModel:
    joints: list[JointSpec]
    links: list[LinkSpec]
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    base_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    ee_offset: np.ndarray | None = None   # EE point in last link frame; capsule tip if None

    def __post_init__(self):
        if len(self.joints) < 2:
            raise ValueError("need at least 2 joints")
        if len(self.joints) != len(self.links):
            raise ValueError("one link per joint")
        self.gravity = np.asarray(self.gravity, dtype=float)
        self.base_position = np.asarray(self.base_position, dtype=float)
        self.base_quat = quat_normalize(np.asarray(self.base_quat, dtype=float))
        for lk in self.links:
            if lk.mass <= 0.0:
                raise ValueError("link mass must be positive")
            lk.inertia = np.asarray(lk.inertia, dtype=float)
            if np.any(np.linalg.eigvalsh(lk.inertia) <= 0.0):
                raise ValueError("link inertia must be positive-definite")
            if lk.capsule_radius <= 0.0:
                raise ValueError("capsule radius must be positive")
        if self.ee_offset is None:
            self.ee_offset = np.asarray(self.links[-1].capsule_p1, dtype=float)
        else:
            self.ee_offset = np.asarray(self.ee_offset, dtype=float)
        self._pack()

    def _pack(self):
        n = len(self.joints)
        self.n = n
        self._origins = np.zeros((n, 3))
        self._rots = np.zeros((n, 3, 3))
        self._axes = np.zeros((n, 3))
        self._q_lo = np.zeros(n)
        self._q_hi = np.zeros(n)
        self._qd_max = np.zeros(n)
        for i, j in enumerate(self.joints):
            self._origins[i] = np.asarray(j.origin_xyz, dtype=float)
            rpy = np.asarray(j.origin_rpy, dtype=float)
            self._rots[i] = rpy_matrix(rpy[0], rpy[1], rpy[2])
            ax = np.asarray(j.axis, dtype=float)
            self._axes[i] = ax / np.linalg.norm(ax)
            self._q_lo[i] = j.q_min
            self._q_hi[i] = j.q_max
            self._qd_max[i] = j.qd_max
        self._masses = np.array([lk.mass for lk in self.links], dtype=float)
        self._coms = np.array([np.asarray(lk.com, dtype=float) for lk in self.links])
        self._inertias = np.array([lk.inertia for lk in self.links])
        self._cap_p0 = np.array([np.asarray(lk.capsule_p0, dtype=float) for lk in self.links])
        self._cap_p1 = np.array([np.asarray(lk.capsule_p1, dtype=float) for lk in self.links])
        self._cap_r = np.array([lk.capsule_radius for lk in self.links], dtype=float)
        self._base_R = quat_to_matrix(self.base_quat)

    def _check(self, state: JointState):
        if state.q.shape != (self.n,) or state.qdot.shape != (self.n,):
            raise InvalidStateError(f"state length must be {self.n}")
        if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.qdot))):
            raise InvalidStateError("non-finite joint state")


def fk(model: ArmModel, state: JointState):
    """World link rotations (n,3,3), link origins (n,3), joint axes (n,3)."""
    model._check(state)
    return _kernels.forward_kinematics(
        state.q, model._base_R, model.base_position,
        model._origins, model._rots, model._axes)


def link_capsule_world(model: ArmModel, state: JointState, link_index: int):
    R, p, _ = fk(model, state)
    a = p[link_index] + R[link_index] @ model._cap_p0[link_index]
    b = p[link_index] + R[link_index] @ model._cap_p1[link_index]
    return a, b, model._cap_r[link_index]


def ee_pose(model: ArmModel, state: JointState) -> Pose:
    R, p, _ = fk(model, state)
    pos = p[-1] + R[-1] @ model.ee_offset
    return Pose(pos, matrix_to_quat(R[-1]))


def mass_matrix(model: ArmModel, state: JointState) -> np.ndarray:
    model._check(state)
    R, p, z = fk(model, state)
    M = _kernels.mass_matrix(R, p, z, model._masses, model._coms, model._inertias)
    return 0.5 * (M + M.T)


def bias_forces(model: ArmModel, state: JointState) -> np.ndarray:
    """Coriolis/centrifugal plus gravity torques, C(q, qd) qd + g(q)."""
    model._check(state)
    R, p, z = fk(model, state)
    return _kernels.rnea(R, p, z, model._masses, model._coms, model._inertias,
                         state.qdot, np.zeros(model.n), model.gravity)


def gravity_torque(model: ArmModel, state: JointState) -> np.ndarray:
    model._check(state)
    R, p, z = fk(model, state)
    return _kernels.rnea(R, p, z, model._masses, model._coms, model._inertias,
                         np.zeros(model.n), np.zeros(model.n), model.gravity)


def coriolis_forces(model: ArmModel, state: JointState) -> np.ndarray:
    return bias_forces(model, state) - gravity_torque(model, state)


def point_jacobian(model: ArmModel, state: JointState, link_index: int,
                   point_in_link_frame) -> np.ndarray:
    model._check(state)
    if not 0 <= link_index < model.n:
        raise IndexError(f"link index {link_index} out of range")
    R, p, z = fk(model, state)
    pt = p[link_index] + R[link_index] @ np.asarray(point_in_link_frame, dtype=float)
    return _kernels.point_jacobian(p, z, link_index, pt)


def point_jacobian_world(model: ArmModel, state: JointState, link_index: int,
                         point_world: np.ndarray) -> np.ndarray:
    model._check(state)
    R, p, z = fk(model, state)
    return _kernels.point_jacobian(p, z, link_index, np.asarray(point_world, dtype=float))


def ee_jacobian(model: ArmModel, state: JointState) -> np.ndarray:
    """6xn Jacobian (linear rows first, then angular) at the EE point."""
    model._check(state)
    R, p, z = fk(model, state)
    pt = p[-1] + R[-1] @ model.ee_offset
    return _kernels.frame_jacobian(p, z, model.n - 1, pt)


def kinetic_energy(model: ArmModel, state: JointState) -> float:
    M = mass_matrix(model, state)
    return 0.5 * float(state.qdot @ M @ state.qdot)


def potential_energy(model: ArmModel, state: JointState) -> float:
    R, p, _ = fk(model, state)
    cw = _kernels.com_world(R, p, model._coms)
    return -float(np.sum(model._masses * (cw @ model.gravity)))


def step(model: ArmModel, state: JointState, torque, dt: float,
         tau_ext=None) -> JointState:
    """Semi-implicit Euler step: qdd = M^-1 (tau + tau_ext - C - g)."""
    model._check(state)
    if not 0.0 < dt <= 0.01:
        raise ValueError("dt must be in (0, 0.01]")
    torque = np.asarray(torque, dtype=float)
    if torque.shape != (model.n,):
        raise ValueError("torque length mismatch")
    rhs = torque - bias_forces(model, state)
    if tau_ext is not None:
        rhs = rhs + np.asarray(tau_ext, dtype=float)
    M = mass_matrix(model, state)
    try:
        qdd = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"singular mass matrix at q={state.q}") from exc
    qd = np.clip(state.qdot + qdd * dt, -model._qd_max, model._qd_max)
    q = state.q + qd * dt
    over_hi = q > model._q_hi
    over_lo = q < model._q_lo
    q = np.clip(q, model._q_lo, model._q_hi)
    qd = np.where(over_hi & (qd > 0), 0.0, qd)
    qd = np.where(over_lo & (qd < 0), 0.0, qd)
    return JointState(q, qd)


def planar_arm(link_lengths, masses, gravity=(0.0, -9.81, 0.0),
               tip_masses: bool = False, mount_rpy=None) -> ArmModel:
    """Planar arm rotating about z, links along local +x.

    With tip_masses=True the link mass concentrates at the capsule tip with
    a tiny inertia, which makes hand-computed inertia matrices exact.
    """
    joints = []
    links = []
    n = len(link_lengths)
    for i, (L, m) in enumerate(zip(link_lengths, masses)):
        off = np.zeros(3) if i == 0 else np.array([link_lengths[i - 1], 0.0, 0.0])
        rpy = np.zeros(3) if mount_rpy is None else np.asarray(mount_rpy[i], dtype=float)
        joints.append(JointSpec(axis=np.array([0.0, 0.0, 1.0]), origin_xyz=off,
                                origin_rpy=rpy))
        if tip_masses:
            com = np.array([L, 0.0, 0.0])
            inertia = np.eye(3) * 1e-9
        else:
            com = np.array([L / 2.0, 0.0, 0.0])
            iyy = m * L * L / 12.0
            inertia = np.diag([1e-6, iyy, iyy])
        links.append(LinkSpec(mass=m, com=com, inertia=inertia,
                              capsule_p0=np.zeros(3), capsule_p1=np.array([L, 0.0, 0.0]),
                              capsule_radius=0.04))
    return ArmModel(joints=joints, links=links, gravity=np.asarray(gravity, dtype=float))


def seven_dof_arm(gravity=(0.0, 0.0, -9.81)) -> ArmModel:
    """Anthropomorphic 7-DoF arm with placeholder inertial values."""
    z = np.array([0.0, 0.0, 1.0])
    y = np.array([0.0, 1.0, 0.0])
    lengths = [0.16, 0.13, 0.21, 0.21, 0.21, 0.11, 0.10]
    axes = [z, y, z, y, z, y, z]
    masses = [2.0, 1.8, 1.6, 1.4, 1.1, 0.9, 0.6]
    radii = [0.050, 0.048, 0.045, 0.042, 0.040, 0.036, 0.032]
    joints = []
    links = []
    for i in range(7):
        off = np.zeros(3) if i == 0 else np.array([0.0, 0.0, lengths[i - 1]])
        joints.append(JointSpec(axis=axes[i], origin_xyz=off, origin_rpy=np.zeros(3),
                                q_min=-2.8, q_max=2.8, qd_max=8.0))
        L = lengths[i]
        m = masses[i]
        ixx = m * (3 * radii[i] ** 2 + L * L) / 12.0
        izz = m * radii[i] ** 2 / 2.0
        links.append(LinkSpec(
            mass=m, com=np.array([0.0, 0.0, L / 2.0]),
            inertia=np.diag([ixx, ixx, izz]),
            capsule_p0=np.zeros(3), capsule_p1=np.array([0.0, 0.0, L]),
            capsule_radius=radii[i]))
    return ArmModel(joints=joints, links=links, gravity=np.asarray(gravity, dtype=float))
