"""Episode execution: waypoint tracking, feedback handling, twin learning.

One runner owns the real-world loop. When feedback arrives it follows the
retract / snapshot / learn-in-twin / resume cycle, so ranking exploration
happens on a frozen copy of the contact state and only the refined policy
ever drives the real arm. Everything observable lands in an event list of
plain dicts (newline-delimited JSON on disk) from which the run metrics
are computed.

The hot paths (per-tick observation and the hierarchy controller) run on
the jitted kernels; hosc.compute_torques is the readable reference the
kernel is tested against.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .arm import ArmModel, JointState, Pose, ee_pose, fk
from .contacts import BodyPart, Contact, ContactSet, pack_world
from .geometry import quat_normalize, quat_to_matrix
from .hosc import ControllerParams, pose_error
from .ranking import (
    ComfortEstimates,
    RankingPolicy,
    SurrogateRanking,
    VARIANT_HEURISTIC,
    compute_rewards,
    heuristic_reorder,
)
from .scenario import Scenario
from .user_model import ComfortModel, Feedback, apply_feedback, feedback_from_forces

MODE_REAL = "REAL_RUN"
MODE_RETRACT = "RETRACTED"
MODE_TWIN = "TWIN_LEARNING"

TWIN_SETTLE_FRACTION = 0.3   # part of the twin horizon ignored when scoring
# regulation hovers at the threshold, so the twin's sustained-violation flag
# allows a small ripple band above it
TWIN_VIOLATION_REL = 0.05
TWIN_VIOLATION_ABS = 0.1
# a run counts as personalized once the user has been quiet this long
SETTLED_QUIET_S = 3.0


@dataclass
class ReferencePath:
    waypoints: list[Pose]
    tol_pos: float
    tol_rot: float

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("reference path needs at least one waypoint")


def advance_waypoint(path: ReferencePath, pose: Pose, index: int):
    """Step the waypoint index when the pose is within tolerance.

    Returns (index, done). Never skips or regresses.
    """
    if index >= len(path.waypoints):
        return index, True
    err = pose_error(pose, path.waypoints[index])
    if np.linalg.norm(err[:3]) < path.tol_pos and np.linalg.norm(err[3:]) < path.tol_rot:
        index += 1
    return index, index >= len(path.waypoints)


@dataclass
class RunMetrics:
    feedback_count: int = 0
    violation_timesteps: int = 0
    completion_time_s: float | None = None
    completed: bool = False
    avg_force_per_part: dict = field(default_factory=dict)
    feedback_to_correct: int | None = None
    ordering_correct_at_end: bool = False
    twin_sessions: int = 0
    twin_episodes_total: int = 0
    twin_nonconverged: int = 0
    reward_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "feedback_count": self.feedback_count,
            "violation_timesteps": self.violation_timesteps,
            "completion_time_s": self.completion_time_s,
            "completed": self.completed,
            "avg_force_per_part": self.avg_force_per_part,
            "feedback_to_correct": self.feedback_to_correct,
            "ordering_correct_at_end": self.ordering_correct_at_end,
            "twin_sessions": self.twin_sessions,
            "twin_episodes_total": self.twin_episodes_total,
            "twin_nonconverged": self.twin_nonconverged,
        }


@dataclass
class Observation:
    """Per-part contact summary from one control tick."""
    f_part: np.ndarray
    anchor_link: np.ndarray
    anchor_point: np.ndarray
    anchor_normal: np.ndarray
    in_contact: np.ndarray

    def forces(self, part_ids: list[str]) -> dict[str, float]:
        return {p: float(self.f_part[i]) for i, p in enumerate(part_ids)}


class SimWorld:
    """Arm plus packed body-part arrays driven by the jitted step kernel."""

    def __init__(self, model: ArmModel, parts: list[BodyPart], stiffness: float,
                 damping: float, radius_scale: float = 1.0):
        self.model = model
        self.part_ids = [p.id for p in parts]
        self.kind, self.a, self.b, self.r, self.vel = pack_world(parts)
        self.r = self.r * radius_scale
        self.stiffness = stiffness
        self.damping = damping

    def sync_parts(self, parts: list[BodyPart]):
        for k, p in enumerate(parts):
            self.a[k] = p.a
            self.b[k] = p.b
            self.vel[k] = p.velocity

    def observe(self, state: JointState) -> Observation:
        m = self.model
        R, p, z = fk(m, state)
        f_part, al, ap, an, ic = _kernels.observe_parts(
            R, p, z, state.qdot, m._cap_p0, m._cap_p1, m._cap_r,
            self.kind, self.a, self.b, self.r, self.vel,
            self.stiffness, self.damping)
        return Observation(f_part, al, ap, an, ic)

    def contact_set(self, state: JointState, t: float = 0.0) -> ContactSet:
        """Full per-contact view (public API form, not the tick hot path)."""
        m = self.model
        R, p, z = fk(m, state)
        count, li, pi, pt, nrm, dep = _kernels.detect_contacts(
            R, p, m._cap_p0, m._cap_p1, m._cap_r, self.kind, self.a, self.b, self.r)
        force, _ = _kernels.contact_forces_and_torque(
            p, z, state.qdot, self.vel, count, li, pi, pt, nrm, dep,
            self.stiffness, self.damping)
        return ContactSet(
            [Contact(self.part_ids[pi[k]], int(li[k]), pt[k].copy(), nrm[k].copy(),
                     force[k].copy(), float(dep[k])) for k in range(count)], t)

    def step(self, state: JointState, tau: np.ndarray, dt: float, nsub: int) -> JointState:
        m = self.model
        q, qd, *_ = _kernels.step_block(
            state.q, state.qdot, tau,
            m._base_R, m.base_position, m._origins, m._rots, m._axes,
            m._masses, m._coms, m._inertias,
            m._cap_p0, m._cap_p1, m._cap_r,
            self.kind, self.a, self.b, self.r, self.vel,
            m.gravity, self.stiffness, self.damping,
            m._q_lo, m._q_hi, m._qd_max,
            dt, nsub)
        return JointState(q, qd)


def twin_convergence_check(history: deque, window: int) -> bool:
    """Converged once the greedy ranking has been stable and violation-free
    for a full window of twin episodes."""
    if len(history) < window:
        return False
    orders = {h[0] for h in history}
    return len(orders) == 1 and not any(h[1] for h in history)


@dataclass
class RunResult:
    metrics: RunMetrics
    events: list


class EpisodeRunner:
    """Executes one scenario run for a given variant, persona, path and seed."""

    def __init__(self, scenario: Scenario, variant: str | None = None,
                 persona_index: int = 0, path_index: int = 0, seed: int = 0,
                 alpha: float | None = None, w_f: float | None = None,
                 suppress_persona: bool = False, human_poll=None, event_hook=None,
                 pace=None):
        self.scenario = scenario
        self.variant = variant or scenario.policy.variant
        self.persona_index = persona_index
        self.path_index = path_index
        self.seed = seed
        self.suppress_persona = suppress_persona
        self.human_poll = human_poll
        self.event_hook = event_hook
        self.pace = pace               # callable(sim_dt) for interactive pacing

        self.model = scenario.build_arm()
        self.persona: ComfortModel = scenario.personas[persona_index].comfort.copy()
        self.estimates: ComfortModel = scenario.population.copy()
        self.part_ids = scenario.part_ids()
        pol = scenario.policy
        self.policy = RankingPolicy(
            self.variant, self.part_ids, scenario.population.base_order(),
            alpha=pol.alpha if alpha is None else alpha)
        self.w_f = pol.w_f if w_f is None else w_f
        self.align_mag = pol.alignment_magnitude
        self.rot_weight = pol.rot_error_weight

        ps = scenario.paths[path_index]
        self.path = ReferencePath(
            [Pose(np.array(w["pos_m"], dtype=float),
                  quat_normalize(np.array(w["quat_wxyz"], dtype=float)))
             for w in ps.waypoints],
            ps.advance_tol_m, ps.advance_tol_rad)

        ctl = scenario.controller
        self.kp6 = np.concatenate([np.full(3, ctl.kp_pos), np.full(3, ctl.kp_rot)])
        self.kd6 = np.concatenate([np.full(3, ctl.kd_pos), np.full(3, ctl.kd_rot)])
        self.params = ControllerParams(
            singular_eig_threshold=ctl.singular_eig_threshold,
            singular_damping_max=ctl.singular_damping_max,
            nullspace_damping=ctl.nullspace_damping,
            torque_limit=ctl.torque_limit,
            pose_error_clamp_m=ctl.pose_error_clamp_m,
            rot_error_clamp_rad=ctl.rot_error_clamp_rad)
        self._refresh_thresholds()
        self.persona_thr = np.array(
            [self.persona.thresholds()[p] for p in self.part_ids])

        self.events: list[dict] = []
        self._event_seq = 0
        self.mode = MODE_REAL
        self.t = 0.0
        self.tick = 0
        self._viol_since: dict[str, float] = {}

    # -- plumbing ------------------------------------------------------------

    def _refresh_thresholds(self):
        thr = self.estimates.thresholds()
        self.thr = np.array([thr[p] for p in self.part_ids])

    def _emit(self, record: dict):
        self.events.append(record)
        if self.event_hook is not None:
            self.event_hook(record)

    def _next_event_id(self) -> str:
        self._event_seq += 1
        return f"e{self._event_seq:04d}"

    def _pose_error_scalar(self, pose: Pose, target: Pose) -> float:
        e = pose_error(pose, target)
        return float(np.linalg.norm(e[:3]) + self.rot_weight * np.linalg.norm(e[3:]))

    def _select(self, obs: Observation, pose_err: float):
        if self.variant == VARIANT_HEURISTIC:
            ranking = heuristic_reorder(
                SurrogateRanking(list(self.policy.base_order)),
                obs.forces(self.part_ids), ComfortEstimates(self.estimates.thresholds()))
            return ranking, []
        return self.policy.select_arrays(obs.f_part, pose_err)

    def _task_order(self, ranking: SurrogateRanking, obs: Observation) -> np.ndarray:
        """Execution order for the torque kernel: 0 = pose objective,
        1 + part row for active force objectives, priority first.

        The pose objective sits first when nothing violates the current
        threshold estimates, otherwise directly below the last violator
        (pose_slot_rule adaptive; 'first'/'last' pin it)."""
        idx = {p: i for i, p in enumerate(self.part_ids)}
        active = [idx[p] for p in ranking.order if obs.in_contact[idx[p]]]
        rule = self.scenario.controller.pose_slot_rule
        tasks = [1 + i for i in active]
        violators = [k for k, i in enumerate(active) if obs.f_part[i] > self.thr[i]]
        if rule == "first" or (rule == "adaptive" and not violators):
            tasks.insert(0, 0)
        elif rule == "last" or not violators:
            tasks.append(0)
        else:
            tasks.insert(violators[-1] + 1, 0)
        return np.array(tasks, dtype=np.int64)

    def _torques(self, state: JointState, tasks: np.ndarray, obs: Observation,
                 target: Pose, kp_scale: float = 1.0, kd_scale: float = 1.0) -> np.ndarray:
        m = self.model
        ctl = self.scenario.controller
        return _kernels.hosc_torques(
            state.q, state.qdot,
            m._base_R, m.base_position, m._origins, m._rots, m._axes,
            m._masses, m._coms, m._inertias, m.gravity,
            tasks, m.n - 1, m.ee_offset, target.position,
            quat_to_matrix(target.quat), kp_scale * self.kp6, kd_scale * self.kd6,
            obs.anchor_link, obs.anchor_point, obs.anchor_normal,
            obs.f_part, self.thr, ctl.kf,
            ctl.singular_eig_threshold, ctl.singular_damping_max,
            ctl.nullspace_damping, ctl.torque_limit,
            self.params.pose_error_clamp_m, self.params.rot_error_clamp_rad)

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunResult:
        scen = self.scenario
        ep = scen.episode
        rng = np.random.default_rng(self.seed)
        n = self.model.n
        q0 = ep.init_q if ep.init_q is not None else np.zeros(n)
        if ep.init_jitter_rad:
            q0 = q0 + rng.normal(scale=ep.init_jitter_rad, size=n)
        state = JointState(q0.copy(), np.zeros(n))
        world = SimWorld(self.model, scen.world_at(0.0), scen.world_stiffness,
                         scen.world_damping)
        dt = ep.physics_dt_s
        decim = ep.control_decimation

        self._emit({
            "type": "meta",
            "scenario": scen.name,
            "scenario_hash": scen.hash(),
            "seed": self.seed,
            "variant": self.variant,
            "persona": scen.personas[self.persona_index].name,
            "path": scen.paths[self.path_index].name,
            "part_ids": self.part_ids,
            "persona_thresholds_n": self.persona.thresholds(),
            "persona_order": self.persona.base_order(),
            "initial_estimates_n": self.estimates.thresholds(),
            "policy_base_order": self.policy.base_order,
        })

        wp = 0
        completed = False
        while self.t < ep.max_duration_s:
            world.sync_parts(scen.world_at(self.t))
            obs = world.observe(state)
            pose = ee_pose(self.model, state)
            wp, done = advance_waypoint(self.path, pose, wp)
            if done:
                completed = True
                self._emit({"type": "complete", "t_s": round(self.t, 6)})
                break
            target = self.path.waypoints[wp]
            pose_err = self._pose_error_scalar(pose, target)
            ranking, _ = self._select(obs, pose_err)
            self._tick_record(obs, ranking, wp)

            fb = self._poll_feedback(obs)
            if fb is not None:
                state = self._handle_feedback(fb, state, world, target)
                continue

            tasks = self._task_order(ranking, obs)
            tau = self._torques(state, tasks, obs, target)
            state = world.step(state, tau, dt, decim)
            self.t += dt * decim
            self.tick += 1
            if self.pace is not None:
                self.pace(dt * decim)

        self._emit({"type": "end", "t_s": round(self.t, 6), "completed": completed})
        metrics = compute_metrics(self.events)
        return RunResult(metrics, self.events)

    def _tick_record(self, obs: Observation, ranking: SurrogateRanking, wp: int):
        self._emit({
            "type": "tick",
            "k": self.tick,
            "t_s": round(self.t, 6),
            "mode": self.mode,
            "i_wp": wp,
            "forces_n": {p: round(float(obs.f_part[i]), 4)
                         for i, p in enumerate(self.part_ids)},
            "in_contact": [p for i, p in enumerate(self.part_ids) if obs.in_contact[i]],
            "ranking": list(ranking.order),
        })

    def _poll_feedback(self, obs: Observation) -> Feedback | None:
        if self.mode != MODE_REAL:
            return None
        if self.human_poll is not None:
            fb = self.human_poll()
            if fb is not None:
                self._last_feedback_source = "human"
                return fb
        if self.suppress_persona or self.t < self.scenario.episode.feedback_start_s:
            return None
        # violation streaks vs the persona's hidden thresholds; the persona
        # reacts to sustained discomfort, immediately above the safety limit
        latency = self.scenario.episode.feedback_min_violation_s
        forces = obs.forces(self.part_ids)
        for i, p in enumerate(self.part_ids):
            if obs.f_part[i] > self.persona_thr[i]:
                self._viol_since.setdefault(p, self.t)
            else:
                self._viol_since.pop(p, None)
        sustained = {p: forces[p] for p, since in self._viol_since.items()
                     if self.t - since >= latency}
        over_safety = {p: f for p, f in forces.items() if f > self.persona.safety_limit}
        candidates = dict(sustained)
        candidates.update(over_safety)
        if not candidates:
            return None
        fb = feedback_from_forces(self.persona, candidates)
        if fb is not None:
            self._last_feedback_source = "persona"
        return fb

    # -- the five-step cycle ---------------------------------------------------

    def _handle_feedback(self, fb: Feedback, state: JointState, world: SimWorld,
                         target: Pose) -> JointState:
        # 1. record feedback, update the controller's threshold estimate
        apply_feedback(self.estimates, fb)
        self._refresh_thresholds()
        self._emit({
            "type": "feedback",
            "event_id": self._next_event_id(),
            "t_s": round(self.t, 6),
            "source": getattr(self, "_last_feedback_source", "persona"),
            "part": fb.body_part_id,
            "delta": list(fb.delta),
            "estimates_n": {p: round(v, 4) for p, v in self.estimates.thresholds().items()},
        })
        snapshot_state = state.copy()
        snapshot_parts = self.scenario.world_at(self.t)
        for p in snapshot_parts:
            p.velocity = np.zeros(3)  # human pose frozen inside the twin

        # 2. retract to the safe configuration
        state = self._retract(state, world)

        # 3-4. explore orderings in the twin from the logged state
        self._twin_session(snapshot_state, snapshot_parts, target)

        # 5. resume
        self.mode = MODE_REAL
        self._viol_since.clear()
        self._emit({"type": "mode_change", "t_s": round(self.t, 6), "mode": self.mode})
        return state

    def _retract(self, state: JointState, world: SimWorld) -> JointState:
        ep = self.scenario.episode
        self.mode = MODE_RETRACT
        self._emit({"type": "mode_change", "t_s": round(self.t, 6), "mode": self.mode})
        retract_q = ep.retract_q if ep.retract_q is not None else np.zeros(self.model.n)
        safe_pose = ee_pose(self.model, JointState(retract_q, np.zeros(self.model.n)))
        tasks = np.array([0], dtype=np.int64)
        dt = ep.physics_dt_s
        decim = ep.control_decimation
        deadline = self.t + ep.retract_timeout_s
        while self.t < min(deadline, ep.max_duration_s):
            world.sync_parts(self.scenario.world_at(self.t))
            obs = world.observe(state)
            pose = ee_pose(self.model, state)
            if np.linalg.norm(pose.position - safe_pose.position) < ep.retract_tol_m:
                break
            tau = self._torques(state, tasks, obs, safe_pose, kp_scale=0.25, kd_scale=0.5)
            self._tick_record(obs, SurrogateRanking([]), -1)
            state = world.step(state, tau, dt, decim)
            self.t += dt * decim
            self.tick += 1
            if self.pace is not None:
                self.pace(dt * decim)
        return state

    def _twin_session(self, snap_state: JointState, snap_parts: list[BodyPart],
                      target: Pose):
        self.mode = MODE_TWIN
        self._emit({"type": "mode_change", "t_s": round(self.t, 6), "mode": self.mode})
        if not self.policy.learns:
            self._emit({"type": "twin_session", "t_s": round(self.t, 6),
                        "episodes": 0, "converged": True, "reward_trace": []})
            return
        twin = TwinSession(self, snap_state, snap_parts, target)
        episodes, converged, trace = twin.run()
        self._emit({"type": "twin_session", "t_s": round(self.t, 6),
                    "episodes": episodes, "converged": converged,
                    "reward_trace": [round(r, 4) for r in trace]})


class TwinSession:
    """Bandit refinement inside a frozen copy of the contact situation."""

    def __init__(self, runner: EpisodeRunner, snap_state: JointState,
                 snap_parts: list[BodyPart], target: Pose):
        self.runner = runner
        scen = runner.scenario
        self.cfg = scen.twin
        self.world = SimWorld(runner.model, snap_parts, scen.world_stiffness,
                              scen.world_damping, radius_scale=self.cfg.radius_scale)
        self.snap_state = snap_state
        self.target = target
        obs = self.world.observe(snap_state)
        self.snap_zf = obs.f_part.copy()
        self.snap_pose_err = runner._pose_error_scalar(
            ee_pose(runner.model, snap_state), target)

    def run(self):
        runner = self.runner
        thresholds = ComfortEstimates(runner.estimates.thresholds())
        window = self.cfg.window
        history: deque = deque(maxlen=window)
        trace = []
        episodes = 0
        converged = False
        for episodes in range(1, self.cfg.max_episodes + 1):
            ranking, ctxs = runner.policy.select_arrays(self.snap_zf, self.snap_pose_err)
            maxf, sustained = self._rollout(ranking)
            forces = {p: float(maxf[i]) for i, p in enumerate(runner.part_ids)}
            fb_forces = {p: forces[p] if sustained[i] else 0.0
                         for i, p in enumerate(runner.part_ids)}
            fb = feedback_from_forces(runner.estimates, fb_forces)
            rewards = compute_rewards(ranking, fb, forces, thresholds,
                                      runner.w_f, runner.align_mag)
            runner.policy.update(ctxs, rewards, ranking)
            trace.append(float(np.mean(rewards)))
            greedy, _ = runner.policy.select_arrays(self.snap_zf, self.snap_pose_err,
                                                    alpha=0.0)
            violated = bool(np.any(sustained))
            history.append((tuple(greedy.order), violated))
            if runner.event_hook is not None and episodes % 5 == 0:
                runner.event_hook({"type": "twin_progress", "episode": episodes,
                                   "max": self.cfg.max_episodes})
            if twin_convergence_check(history, window):
                converged = True
                break
        return episodes, converged, trace

    def _rollout(self, ranking: SurrogateRanking):
        """Roll the twin forward under a fixed ranking.

        Returns (maxf, sustained): max per-part force over the horizon tail
        (a settle period absorbs the snapshot's inherited transient), and a
        flag per part marking violations of the current threshold estimates
        that persisted longer than the persona's reaction latency, i.e.
        violations that would have drawn feedback on the real system.
        """
        runner = self.runner
        scen = runner.scenario
        dt = scen.episode.physics_dt_s
        decim = self.cfg.control_decimation
        ticks = max(2, int(round(self.cfg.horizon_s / (dt * decim))))
        settle = int(ticks * TWIN_SETTLE_FRACTION)
        latency_ticks = max(1, int(round(
            scen.episode.feedback_min_violation_s / (dt * decim))))
        m = len(runner.part_ids)
        state = self.snap_state.copy()
        maxf = np.zeros(m)
        streak = np.zeros(m, dtype=np.int64)
        sustained = np.zeros(m, dtype=bool)
        viol_band = runner.thr * (1.0 + TWIN_VIOLATION_REL) + TWIN_VIOLATION_ABS
        for k in range(ticks):
            obs = self.world.observe(state)
            if k >= settle:
                np.maximum(maxf, obs.f_part, out=maxf)
                over = obs.f_part > viol_band
                streak = np.where(over, streak + 1, 0)
                sustained |= streak >= latency_ticks
            tasks = runner._task_order(ranking, obs)
            tau = runner._torques(state, tasks, obs, self.target)
            state = self.world.step(state, tau, dt, decim)
        return maxf, sustained


def compute_metrics(events: list[dict]) -> RunMetrics:
    """Fold an event list into the run metrics.

    feedback_to_correct counts the feedback the user gave before going
    quiet for good: the total count when the run ends settled (no feedback
    within the final SETTLED_QUIET_S of real time), else count + 1 as a
    did-not-settle sentinel. Several orderings can satisfy the same user,
    so exact-permutation agreement is reported separately.
    """
    meta = next((e for e in events if e["type"] == "meta"), None)
    m = RunMetrics()
    persona_thr = meta["persona_thresholds_n"] if meta else {}
    persona_order = meta.get("persona_order", []) if meta else []
    force_sums: dict[str, float] = {}
    force_counts: dict[str, int] = {}
    end_time = 0.0
    feedback_times = []
    final_ranking = None
    for e in events:
        kind = e["type"]
        if kind == "tick" and e["mode"] == MODE_REAL:
            forces = e["forces_n"]
            if any(forces.get(p, 0.0) > thr for p, thr in persona_thr.items()):
                m.violation_timesteps += 1
            for p in e["in_contact"]:
                force_sums[p] = force_sums.get(p, 0.0) + forces.get(p, 0.0)
                force_counts[p] = force_counts.get(p, 0) + 1
            final_ranking = e["ranking"]
        elif kind == "feedback":
            m.feedback_count += 1
            feedback_times.append(e["t_s"])
        elif kind == "twin_session":
            m.twin_sessions += 1
            m.twin_episodes_total += e["episodes"]
            m.twin_nonconverged += 0 if e["converged"] else 1
            m.reward_trace.extend(e.get("reward_trace", []))
        elif kind == "complete":
            m.completion_time_s = e["t_s"]
            m.completed = True
        elif kind == "end":
            m.completed = m.completed or e.get("completed", False)
            end_time = e.get("t_s", 0.0)
    m.avg_force_per_part = {
        p: round(force_sums[p] / force_counts[p], 4) for p in sorted(force_sums)}
    m.ordering_correct_at_end = (final_ranking == persona_order and bool(persona_order))
    settled = not feedback_times or feedback_times[-1] <= end_time - SETTLED_QUIET_S
    m.feedback_to_correct = m.feedback_count if settled else m.feedback_count + 1
    return m


def write_events(events: list[dict], path):
    with open(path, "w") as fh:
        for e in events:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


def read_events(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
