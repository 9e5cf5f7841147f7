"""Scenario files: experiment configuration with explicit units.

A scenario is one YAML document naming the arm, the body-part world, the
reference paths, persona set, policy settings and episode parameters.
Loading normalizes everything into dataclasses; re-serializing a loaded
scenario is idempotent, and the canonical dump's hash stamps every output
artifact.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .arm import ArmModel, JointSpec, LinkSpec, planar_arm, seven_dof_arm
from .contacts import BodyPart
from .ranking import VARIANTS
from .user_model import ComfortModel, PartComfort


class ScenarioError(ValueError):
    """Scenario file failed validation."""


@dataclass
class ApproachMotion:
    """Straight-line approach: move toward target at constant speed, stop there."""
    target: np.ndarray
    speed: float
    start: float = 0.0

    def position_velocity(self, origin: np.ndarray, t: float):
        delta = self.target - origin
        dist = float(np.linalg.norm(delta))
        if dist < 1e-12 or self.speed <= 0:
            return origin.copy(), np.zeros(3)
        direction = delta / dist
        travelled = max(0.0, (t - self.start)) * self.speed
        if travelled >= dist:
            return self.target.copy(), np.zeros(3)
        if t < self.start:
            return origin.copy(), np.zeros(3)
        return origin + direction * travelled, direction * self.speed


@dataclass
class KeyframeMotion:
    """Piecewise-linear position track, optionally looping.

    Keyframes are (time, position) pairs; the position holds after the last
    keyframe, or the cycle repeats every loop_s seconds.
    """
    times: np.ndarray
    points: np.ndarray
    loop: float | None = None

    def position_velocity(self, origin: np.ndarray, t: float):
        if self.loop:
            t = t % self.loop
        times, pts = self.times, self.points
        if t <= times[0]:
            return pts[0].copy(), np.zeros(3)
        if t >= times[-1]:
            return pts[-1].copy(), np.zeros(3)
        k = int(np.searchsorted(times, t, side="right")) - 1
        dt = times[k + 1] - times[k]
        if dt <= 0:
            return pts[k + 1].copy(), np.zeros(3)
        v = (pts[k + 1] - pts[k]) / dt
        return pts[k] + v * (t - times[k]), v


@dataclass
class WorldPart:
    id: str
    shape: str
    a: np.ndarray
    b: np.ndarray | None
    radius: float
    motion: ApproachMotion | None = None

    def body_part(self, t: float = 0.0) -> BodyPart:
        if self.motion is None:
            return BodyPart(self.id, self.shape, self.a.copy(),
                            None if self.b is None else self.b.copy(), self.radius)
        pos, vel = self.motion.position_velocity(self.a, t)
        offset = pos - self.a
        bp = BodyPart(self.id, self.shape, pos,
                      None if self.b is None else self.b + offset, self.radius)
        bp.velocity = vel
        return bp


@dataclass
class PathSpec:
    name: str
    waypoints: list[dict]          # {pos_m: [...], quat_wxyz: [...]}
    advance_tol_m: float
    advance_tol_rad: float


@dataclass
class PersonaSpec:
    name: str
    comfort: ComfortModel


@dataclass
class ControllerConfig:
    kp_pos: float = 100.0
    kd_pos: float = 20.0
    kp_rot: float = 100.0
    kd_rot: float = 20.0
    kf: float = 0.05
    singular_eig_threshold: float = 1e-3
    singular_damping_max: float = 0.1
    nullspace_damping: float = 1.0
    torque_limit: float = 200.0
    pose_slot_rule: str = "adaptive"
    pose_error_clamp_m: float = 0.1
    rot_error_clamp_rad: float = float(np.pi)


@dataclass
class PolicyConfig:
    variant: str = "linucb-rank"
    alpha: float = 1.0
    w_f: float = 0.25
    alignment_magnitude: float = 1.0
    rot_error_weight: float = 0.2      # m per rad in the pose-error scalar


@dataclass
class TwinConfig:
    horizon_s: float = 0.5
    window: int = 20
    max_episodes: int = 500
    radius_scale: float = 1.0
    control_decimation: int = 8


@dataclass
class EpisodeConfig:
    physics_dt_s: float = 0.001
    control_decimation: int = 4
    max_duration_s: float = 15.0
    init_q: np.ndarray | None = None
    init_jitter_rad: float = 0.0
    retract_q: np.ndarray | None = None
    retract_timeout_s: float = 2.0
    retract_tol_m: float = 0.05
    feedback_start_s: float = 0.0      # grace period before the persona speaks
    # persona reaction latency: a violation must persist this long before
    # feedback fires (safety-limit exceedances fire immediately)
    feedback_min_violation_s: float = 0.5


@dataclass
class Scenario:
    name: str
    arm_cfg: dict
    world_stiffness: float
    world_damping: float
    parts: list[WorldPart]
    paths: list[PathSpec]
    personas: list[PersonaSpec]
    population: ComfortModel
    controller: ControllerConfig
    policy: PolicyConfig
    twin: TwinConfig
    episode: EpisodeConfig
    default_seeds: list[int]
    raw: dict = field(repr=False, default_factory=dict)

    def build_arm(self) -> ArmModel:
        return build_arm(self.arm_cfg)

    def world_at(self, t: float = 0.0) -> list[BodyPart]:
        return [p.body_part(t) for p in self.parts]

    def part_ids(self) -> list[str]:
        return [p.id for p in self.parts]

    def hash(self) -> str:
        return hashlib.sha256(
            yaml.safe_dump(self.raw, sort_keys=True).encode()).hexdigest()[:16]


def build_arm(cfg: dict) -> ArmModel:
    preset = cfg.get("preset", "custom")
    gravity = cfg.get("gravity_mps2", [0.0, 0.0, -9.81])
    base_pos = np.asarray(cfg.get("base_position_m", [0.0, 0.0, 0.0]), dtype=float)
    base_quat = np.asarray(cfg.get("base_quat_wxyz", [1.0, 0.0, 0.0, 0.0]), dtype=float)
    if preset == "planar-2dof":
        model = planar_arm([0.6, 0.5], [1.2, 1.0], gravity=gravity)
    elif preset == "planar-3dof":
        model = planar_arm([0.5, 0.4, 0.3], [1.2, 1.0, 0.8], gravity=gravity)
    elif preset == "spatial-7dof":
        model = seven_dof_arm(gravity=gravity)
    elif preset == "custom":
        joints = [JointSpec(axis=np.array(j["axis"], dtype=float),
                            origin_xyz=np.array(j["origin_xyz_m"], dtype=float),
                            origin_rpy=np.array(j.get("origin_rpy_rad", [0, 0, 0]), dtype=float),
                            q_min=float(j.get("q_min_rad", -10.0)),
                            q_max=float(j.get("q_max_rad", 10.0)),
                            qd_max=float(j.get("qd_max_rad_s", 50.0)))
                  for j in cfg["joints"]]
        links = [LinkSpec(mass=float(lk["mass_kg"]),
                          com=np.array(lk["com_m"], dtype=float),
                          inertia=np.array(lk["inertia_kgm2"], dtype=float),
                          capsule_p0=np.array(lk["capsule_p0_m"], dtype=float),
                          capsule_p1=np.array(lk["capsule_p1_m"], dtype=float),
                          capsule_radius=float(lk["radius_m"]))
                 for lk in cfg["links"]]
        model = ArmModel(joints=joints, links=links, gravity=np.asarray(gravity, dtype=float))
    else:
        raise ScenarioError(f"unknown arm preset {preset!r}")
    model.base_position = base_pos
    model.base_quat = base_quat
    model._pack()
    return model


def _comfort_from_dict(d: dict, part_ids: list[str], where: str) -> ComfortModel:
    parts = {}
    for pid, pd in d["parts"].items():
        if pid not in part_ids:
            raise ScenarioError(f"{where}: unknown body part {pid!r}")
        parts[pid] = PartComfort(
            pain_limit=float(pd["pain_limit_n"]),
            sensitivity=float(pd["sensitivity"]),
            base_priority=int(pd["base_priority"]),
            threshold=float(pd["threshold_n"]) if "threshold_n" in pd else None)
    missing = set(part_ids) - set(parts)
    if missing:
        raise ScenarioError(f"{where}: missing comfort entries for {sorted(missing)}")
    try:
        return ComfortModel(parts, gamma=float(d.get("gamma", 0.7)),
                            safety_limit=float(d["safety_limit_n"]))
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        world = doc["world"]
        parts = []
        for pd in world["parts"]:
            motion = None
            if "approach" in pd:
                ap = pd["approach"]
                motion = ApproachMotion(
                    target=np.array(ap["target_m"], dtype=float),
                    speed=float(ap["speed_mps"]),
                    start=float(ap.get("start_s", 0.0)))
            elif "motion" in pd:
                mo = pd["motion"]
                kf = mo["keyframes"]
                motion = KeyframeMotion(
                    times=np.array([float(k["t_s"]) for k in kf]),
                    points=np.array([k["pos_m"] for k in kf], dtype=float),
                    loop=float(mo["loop_s"]) if "loop_s" in mo else None)
            shape = pd["shape"]
            a = np.array(pd["center_m" if shape == "sphere" else "a_m"], dtype=float)
            b = None if shape == "sphere" else np.array(pd["b_m"], dtype=float)
            parts.append(WorldPart(pd["id"], shape, a, b, float(pd["radius_m"]), motion))
        ids = [p.id for p in parts]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate body part ids")

        paths = [PathSpec(p.get("name", f"path{i}"), p["waypoints"],
                          float(p.get("advance_tol_m", 0.04)),
                          float(p.get("advance_tol_rad", 6.3)))
                 for i, p in enumerate(doc["paths"])]

        personas = [PersonaSpec(p.get("name", f"persona{i}"),
                                _comfort_from_dict(p, ids, f"persona {i}"))
                    for i, p in enumerate(doc["personas"])]
        population = _comfort_from_dict(doc["population"], ids, "population")

        ctl = doc.get("controller", {})
        controller = ControllerConfig(
            kp_pos=float(ctl.get("kp_pos_per_s2", 100.0)),
            kd_pos=float(ctl.get("kd_pos_per_s", 20.0)),
            kp_rot=float(ctl.get("kp_rot_per_s2", 100.0)),
            kd_rot=float(ctl.get("kd_rot_per_s", 20.0)),
            kf=float(ctl.get("kf_m_per_s2_n", 0.05)),
            singular_eig_threshold=float(ctl.get("singular_eig_threshold", 1e-3)),
            singular_damping_max=float(ctl.get("singular_damping_max", 0.1)),
            nullspace_damping=float(ctl.get("nullspace_damping_nms", 1.0)),
            torque_limit=float(ctl.get("torque_limit_nm", 200.0)),
            pose_slot_rule=str(ctl.get("pose_slot_rule", "adaptive")),
            pose_error_clamp_m=float(ctl.get("pose_error_clamp_m", 0.1)),
            rot_error_clamp_rad=float(ctl.get("rot_error_clamp_rad", np.pi)))
        if controller.pose_slot_rule not in ("adaptive", "first", "last"):
            raise ScenarioError(f"bad pose_slot_rule {controller.pose_slot_rule!r}")

        pol = doc.get("policy", {})
        policy = PolicyConfig(
            variant=str(pol.get("variant", "linucb-rank")),
            alpha=float(pol.get("alpha_exploration", 1.0)),
            w_f=float(pol.get("w_f_per_n", 0.25)),
            alignment_magnitude=float(pol.get("alignment_magnitude", 1.0)),
            rot_error_weight=float(pol.get("rot_error_weight_m_per_rad", 0.2)))
        if policy.variant not in VARIANTS:
            raise ScenarioError(f"unknown policy variant {policy.variant!r}")

        tw = doc.get("twin", {})
        twin = TwinConfig(
            horizon_s=float(tw.get("horizon_s", 0.5)),
            window=int(tw.get("convergence_window_episodes", 20)),
            max_episodes=int(tw.get("max_episodes", 500)),
            radius_scale=float(tw.get("collision_radius_scale", 1.0)),
            control_decimation=int(tw.get("control_decimation", 8)))

        ep = doc.get("episode", {})
        episode = EpisodeConfig(
            physics_dt_s=float(ep.get("physics_dt_s", 0.001)),
            control_decimation=int(ep.get("control_decimation", 4)),
            max_duration_s=float(ep.get("max_duration_s", 15.0)),
            init_q=np.array(ep["init_q_rad"], dtype=float) if "init_q_rad" in ep else None,
            init_jitter_rad=float(ep.get("init_q_jitter_rad", 0.0)),
            retract_q=np.array(ep["retract_q_rad"], dtype=float) if "retract_q_rad" in ep else None,
            retract_timeout_s=float(ep.get("retract_timeout_s", 2.0)),
            retract_tol_m=float(ep.get("retract_tol_m", 0.05)),
            feedback_start_s=float(ep.get("feedback_start_s", 0.0)),
            feedback_min_violation_s=float(ep.get("feedback_min_violation_s", 0.5)))
        if not 0 < episode.physics_dt_s <= 0.01:
            raise ScenarioError("physics_dt_s must be in (0, 0.01]")
        if float(world.get("contact_stiffness_n_per_m", 2000.0)) < 0 or \
                float(world.get("contact_damping_ns_per_m", 200.0)) < 0:
            raise ScenarioError("contact stiffness/damping must be nonnegative")

        scen = Scenario(
            name=str(doc.get("name", "unnamed")),
            arm_cfg=doc["arm"],
            world_stiffness=float(world.get("contact_stiffness_n_per_m", 2000.0)),
            world_damping=float(world.get("contact_damping_ns_per_m", 200.0)),
            parts=parts,
            paths=paths,
            personas=personas,
            population=population,
            controller=controller,
            policy=policy,
            twin=twin,
            episode=episode,
            default_seeds=[int(s) for s in doc.get("run", {}).get("default_seeds", [0])],
            raw=doc)
    except KeyError as exc:
        raise ScenarioError(f"missing scenario field: {exc}") from exc
    # arm must build and init/retract joint vectors must match its size
    model = scen.build_arm()
    for vec_name in ("init_q", "retract_q"):
        vec = getattr(scen.episode, vec_name)
        if vec is not None and vec.shape != (model.n,):
            raise ScenarioError(f"{vec_name} length {vec.shape[0]} != {model.n} joints")
    return scen


def load_scenario(path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    doc = yaml.safe_load(p.read_text())
    if not isinstance(doc, dict):
        raise ScenarioError("scenario file must contain a mapping")
    return scenario_from_dict(doc)


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.raw, sort_keys=True)
