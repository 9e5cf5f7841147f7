"""Static human-body geometry, contact detection and penalty forces.

Body parts are spheres or capsules tagged with ids. Contacts against the
arm's capsule links use a normal spring-damper law (no friction); per-part
force magnitudes aggregate by taking the max contact-force norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .arm import ArmModel, JointState, fk


@dataclass
class BodyPart:
    id: str
    shape: str                         # "sphere" | "capsule"
    a: np.ndarray                      # center (sphere) or first endpoint, world m
    b: np.ndarray | None = None        # second endpoint (capsule)
    radius: float = 0.05
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"part {self.id}: radius must be positive")
        if self.shape not in ("sphere", "capsule"):
            raise ValueError(f"part {self.id}: unknown shape {self.shape!r}")
        if self.shape == "capsule" and self.b is None:
            raise ValueError(f"part {self.id}: capsule needs two endpoints")
        self.a = np.asarray(self.a, dtype=float)
        self.b = self.a.copy() if self.b is None else np.asarray(self.b, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)

    def copy(self) -> "BodyPart":
        return BodyPart(self.id, self.shape, self.a.copy(), self.b.copy(),
                        self.radius, self.velocity.copy())


@dataclass
class Contact:
    body_part_id: str
    link_index: int
    point: np.ndarray                  # world, m
    normal: np.ndarray                 # unit, from body part toward link
    force: np.ndarray                  # acting on the arm, N
    penetration_depth: float           # m, >= 0


@dataclass
class ContactSet:
    contacts: list[Contact]
    timestamp: float = 0.0

    def part_ids(self) -> set[str]:
        return {c.body_part_id for c in self.contacts}

    def on_part(self, part_id: str) -> list[Contact]:
        return [c for c in self.contacts if c.body_part_id == part_id]


def pack_world(parts: list[BodyPart]):
    """Flatten body parts into the array form the kernels take."""
    ids = [p.id for p in parts]
    if len(set(ids)) != len(ids):
        raise ValueError("body part ids must be unique")
    m = len(parts)
    kind = np.zeros(m, dtype=np.int64)
    a = np.zeros((m, 3))
    b = np.zeros((m, 3))
    r = np.zeros(m)
    vel = np.zeros((m, 3))
    for k, p in enumerate(parts):
        kind[k] = _kernels.PART_SPHERE if p.shape == "sphere" else _kernels.PART_CAPSULE
        a[k] = p.a
        b[k] = p.b
        r[k] = p.radius
        vel[k] = p.velocity
    return kind, a, b, r, vel


def detect_contacts(model: ArmModel, state: JointState, world: list[BodyPart],
                    timestamp: float = 0.0) -> ContactSet:
    """One contact per (link, part) pair whose capsule cores come closer
    than the radius sum. Forces are left zero; see penalty/contact_forces."""
    if not world:
        return ContactSet([], timestamp)
    kind, a, b, r, _ = pack_world(world)
    R, p, z = fk(model, state)
    count, li, pi, pt, nrm, dep = _kernels.detect_contacts(
        R, p, model._cap_p0, model._cap_p1, model._cap_r, kind, a, b, r)
    contacts = [
        Contact(world[pi[k]].id, int(li[k]), pt[k].copy(), nrm[k].copy(),
                np.zeros(3), float(dep[k]))
        for k in range(count)
    ]
    return ContactSet(contacts, timestamp)


def penalty_force(contact: Contact, relative_velocity, stiffness: float,
                  damping: float) -> np.ndarray:
    """Normal spring-damper force on the arm: k d - c v_n along the normal.

    relative_velocity is v_link_point - v_body; v_n its normal component.
    The damping term is bounded by the spring term, so the force ramps up
    continuously on impact instead of spiking with approach velocity, and
    separating motion only unloads the spring (never pulls).
    """
    if contact.penetration_depth < 0:
        raise ValueError("penetration depth must be nonnegative")
    v_n = float(np.dot(np.asarray(relative_velocity, dtype=float), contact.normal))
    spring = stiffness * contact.penetration_depth
    damp = min(spring, max(-spring, -damping * v_n))
    return (spring + damp) * contact.normal


def contact_forces(model: ArmModel, state: JointState, cs: ContactSet,
                   world: list[BodyPart], stiffness: float, damping: float) -> ContactSet:
    """Fill in the penalty force of every contact (returns the same set)."""
    by_id = {p.id: p for p in world}
    _, p, z = fk(model, state)
    for c in cs.contacts:
        J = _kernels.point_jacobian(p, z, c.link_index, c.point)
        v_rel = J @ state.qdot - by_id[c.body_part_id].velocity
        c.force = penalty_force(c, v_rel, stiffness, damping)
    return cs


def aggregate_force(cs: ContactSet, part: BodyPart | str) -> float:
    """Max contact-force norm on the part; 0 with no contacts."""
    pid = part if isinstance(part, str) else part.id
    mags = [float(np.linalg.norm(c.force)) for c in cs.contacts if c.body_part_id == pid]
    return max(mags) if mags else 0.0


def forces_by_part(cs: ContactSet, part_ids: list[str]) -> dict[str, float]:
    out = {pid: 0.0 for pid in part_ids}
    for c in cs.contacts:
        mag = float(np.linalg.norm(c.force))
        if c.body_part_id in out and mag > out[c.body_part_id]:
            out[c.body_part_id] = mag
    return out


def joint_space_contact_torque(model: ArmModel, state: JointState,
                               cs: ContactSet) -> np.ndarray:
    """Joint torque of all contact reactions on the arm, sum of J^T f."""
    tau = np.zeros(model.n)
    if not cs.contacts:
        return tau
    _, p, z = fk(model, state)
    for c in cs.contacts:
        J = _kernels.point_jacobian(p, z, c.link_index, c.point)
        tau += J.T @ c.force
    return tau
