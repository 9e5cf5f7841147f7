"""Hierarchical operational space control.

Executes an ordered list of objectives as a strict priority hierarchy:
each objective's Jacobian is projected into the null space of everything
above it, task forces come from the operational-space inertia of the
projected Jacobian, and the torque contributions compose additively.
Gravity is compensated in joint space; the leftover null space gets a
small damping torque so unconstrained motion bleeds off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arm import ArmModel, JointState, Pose, bias_forces, ee_jacobian, ee_pose, fk, gravity_torque, mass_matrix
from .contacts import ContactSet
from .geometry import quat_to_matrix, rotation_vector


class InactiveObjectiveError(ValueError):
    """A force objective refers to a body part that is not in contact."""


@dataclass
class PoseTrack:
    target: Pose
    kp: np.ndarray            # (6,) proportional gains, 1/s^2
    kd: np.ndarray            # (6,) derivative gains, 1/s

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("pose gains must be nonnegative")


@dataclass
class ForceReg:
    """Regulate the aggregate force on one body part toward its threshold.

    The task is one-dimensional along the pressing direction (opposite the
    contact normal) of the part's strongest contact, refreshed every cycle.
    """
    body_part_id: str
    threshold: float          # N
    gain: float               # m/(s^2 N)
    link_index: int
    point: np.ndarray         # world anchor of the strongest contact
    normal: np.ndarray        # unit, from body part toward link
    force: float              # current aggregate force f(b), N

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError("force gain must be nonnegative")
        self.point = np.asarray(self.point, dtype=float)
        self.normal = np.asarray(self.normal, dtype=float)


Objective = PoseTrack | ForceReg


@dataclass
class Hierarchy:
    objectives: list          # highest priority first

    def __post_init__(self):
        parts = [o.body_part_id for o in self.objectives if isinstance(o, ForceReg)]
        if len(parts) != len(set(parts)):
            raise ValueError("duplicate force objectives for one body part")
        if sum(isinstance(o, PoseTrack) for o in self.objectives) > 1:
            raise ValueError("at most one pose objective")


@dataclass
class ControllerParams:
    # adaptive damping for the Lambda inversion: exact above the eigenvalue
    # threshold, Tikhonov-damped as eigenvalues of J Minv J^T fall below it
    singular_eig_threshold: float = 1e-3
    singular_damping_max: float = 0.1
    nullspace_damping: float = 1.0      # N m s, residual joint damping
    torque_limit: float = 200.0         # N m, symmetric clamp
    # bounded pose error saturates approach speed at kp/kd * clamp
    pose_error_clamp_m: float = 0.1
    rot_error_clamp_rad: float = np.pi


@dataclass
class HoscDiagnostics:
    """Per-objective internals for the non-interference checks."""
    projected_jacobians: list = field(default_factory=list)
    contributions: list = field(default_factory=list)
    task_eig_min: list = field(default_factory=list)
    minv: np.ndarray | None = None
    final_projector: np.ndarray | None = None


def _damped_spd_inverse(X: np.ndarray, params: ControllerParams):
    """Inverse of a symmetric PSD matrix, exact for healthy eigenvalues and
    smoothly damped toward zero response as directions become infeasible.
    Returns the inverse and the smallest eigenvalue."""
    w, V = np.linalg.eigh(0.5 * (X + X.T))
    inv_w = np.zeros_like(w)
    thr = params.singular_eig_threshold
    for i, wi in enumerate(w):
        if wi >= thr:
            inv_w[i] = 1.0 / wi
        elif wi > 0.0:
            lam = params.singular_damping_max * (1.0 - wi / thr)
            inv_w[i] = wi / (wi * wi + lam * lam)
        # nonpositive eigenvalues respond with zero
    return (V * inv_w) @ V.T, float(w[0])


def pose_error(current: Pose, target: Pose) -> np.ndarray:
    """6-vector [position error; rotation-vector orientation error]."""
    e = np.zeros(6)
    e[:3] = target.position - current.position
    R_err = quat_to_matrix(target.quat) @ quat_to_matrix(current.quat).T
    e[3:] = rotation_vector(R_err)
    return e


def _clamp_norm(v: np.ndarray, limit: float) -> np.ndarray:
    n = np.linalg.norm(v)
    if n > limit > 0:
        return v * (limit / n)
    return v


def desired_acceleration(obj: Objective, model: ArmModel, state: JointState,
                         cs: ContactSet, params: ControllerParams | None = None) -> np.ndarray:
    """Task-space acceleration command for one objective.

    PoseTrack: Kp * pose error - Kd * task velocity (6-vector); the error is
    norm-clamped so long approaches happen at bounded speed.
    ForceReg:  -Kf * (f(b) - f_max(b)), scalar along the pressing direction,
    so excess force commands a retreat away from the body part.
    """
    if params is None:
        params = ControllerParams()
    if isinstance(obj, PoseTrack):
        cur = ee_pose(model, state)
        xdot = ee_jacobian(model, state) @ state.qdot
        err = pose_error(cur, obj.target)
        err[:3] = _clamp_norm(err[:3], params.pose_error_clamp_m)
        err[3:] = _clamp_norm(err[3:], params.rot_error_clamp_rad)
        return obj.kp * err - obj.kd * xdot
    if obj.body_part_id not in cs.part_ids():
        raise InactiveObjectiveError(f"part {obj.body_part_id} not in contact")
    return np.array([-obj.gain * (obj.force - obj.threshold)])


def task_jacobian(obj: Objective, model: ArmModel, state: JointState) -> np.ndarray:
    """Task Jacobian: 6xn frame Jacobian for pose tracking, 1xn row along
    the pressing direction for force regulation."""
    if isinstance(obj, PoseTrack):
        return ee_jacobian(model, state)
    from . import _kernels
    _, p, z = fk(model, state)
    Jp = _kernels.point_jacobian(p, z, obj.link_index, obj.point)
    return (-obj.normal.reshape(1, 3)) @ Jp


def compute_torques(model: ArmModel, state: JointState, hierarchy: Hierarchy,
                    cs: ContactSet, params: ControllerParams | None = None,
                    diagnostics: bool = False):
    """Joint torques executing the hierarchy with strict priorities.

    For each objective j in order, with N_1 = I:
        Jbar_j   = J_j N_j
        Lambda_j = (Jbar_j Minv Jbar_j^T)^-1          (damped near singularity)
        F_j      = Lambda_j (xdd_des_j + Jbar_j Minv c)
        tau_j    = Jbar_j^T F_j
        N_{j+1}  = N_j - Minv Jbar_j^T Lambda_j Jbar_j N_j
    and the total is gravity compensation + sum tau_j + residual damping.
    """
    if params is None:
        params = ControllerParams()
    if not hierarchy.objectives:
        raise ValueError("hierarchy must contain at least one objective")
    n = model.n
    M = mass_matrix(model, state)
    minv = np.linalg.inv(M)
    g = gravity_torque(model, state)
    cor = bias_forces(model, state) - g
    N = np.eye(n)
    tau = g.copy()
    diag = HoscDiagnostics(minv=minv) if diagnostics else None
    for obj in hierarchy.objectives:
        J = task_jacobian(obj, model, state)
        xdd = desired_acceleration(obj, model, state, cs, params)
        if isinstance(obj, PoseTrack):
            # zero-gain directions exert nothing, so they must not constrain
            # the hierarchy either (a position-only pose keeps rotational
            # freedom available to lower-priority objectives)
            active = (obj.kp > 0) | (obj.kd > 0)
            if not np.all(active):
                J = J[active]
                xdd = xdd[active]
        Jbar = J @ N
        JbarMinv = Jbar @ minv
        X = JbarMinv @ Jbar.T
        lam, eig_min = _damped_spd_inverse(X, params)
        F = lam @ (xdd + JbarMinv @ cor)
        if isinstance(obj, ForceReg):
            # feed forward the measured contact force: the reaction enters the
            # dynamics physically, and without cancelling it the acceleration
            # law settles at f_max * L Kf / (1 + L Kf) instead of f_max
            F = F + obj.force
        tau_j = Jbar.T @ F
        tau += tau_j
        N = N - minv @ Jbar.T @ (lam @ (Jbar @ N))
        if diagnostics:
            diag.projected_jacobians.append(Jbar)
            diag.contributions.append(tau_j)
            diag.task_eig_min.append(eig_min)
    tau_res = N.T @ (-params.nullspace_damping * state.qdot)
    tau += tau_res
    tau = np.clip(tau, -params.torque_limit, params.torque_limit)
    if diagnostics:
        diag.final_projector = N
        return tau, diag
    return tau
