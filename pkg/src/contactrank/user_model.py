"""Synthetic care-recipient model.

Holds per-body-part comfort thresholds derived from pain limits scaled by a
conservative fraction and a population sensitivity ratio, a base protection
priority, and a global safety force limit. Generates sparse categorical
feedback when forces exceed thresholds, and applies requested threshold
changes on the receiving (controller) side.

Two instances of the same type play different roles at run time: the
persona's model (hidden ground truth that emits feedback) and the
controller's estimate (updated by that feedback).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .contacts import ContactSet, aggregate_force
from .ranking import (
    DELTA_DEC_LARGE,
    DELTA_DEC_SMALL,
    DELTA_INC_LARGE,
    DELTA_INC_SMALL,
)

SENSITIVITY_FLOOR = 0.05

# multiplicative threshold updates per requested-change category
DELTA_FACTORS = {
    DELTA_DEC_LARGE: 0.7,
    DELTA_DEC_SMALL: 0.9,
    DELTA_INC_SMALL: 1.1,
    DELTA_INC_LARGE: 1.3,
}
THRESHOLD_FLOOR_N = 1.0


@dataclass
class Feedback:
    body_part_id: str
    delta: tuple          # one-hot, order (dec-Large, dec-Small, inc-Small, inc-Large)

    def __post_init__(self):
        self.delta = tuple(int(v) for v in self.delta)
        if len(self.delta) != 4 or sum(self.delta) != 1:
            raise ValueError("delta must be one-hot of length 4")


def comfort_threshold(pain_limit: float, gamma: float, sensitivity: float) -> float:
    """Comfort threshold: pain limit x conservative fraction x sensitivity."""
    if pain_limit <= 0 or gamma <= 0 or sensitivity <= 0:
        raise ValueError("comfort threshold inputs must be positive")
    return pain_limit * gamma * sensitivity


def sensitivity_ratio(selection_count: int, max_count: int,
                      floor: float = SENSITIVITY_FLOOR) -> float:
    """Selection frequency normalized by the most-selected part, floored so
    never-selected parts keep a nonzero threshold."""
    if max_count <= 0 or not 0 <= selection_count <= max_count:
        raise ValueError("need 0 <= selection_count <= max_count, max_count > 0")
    return max(floor, selection_count / max_count)


@dataclass
class PartComfort:
    pain_limit: float               # N
    sensitivity: float              # (0, 1]
    base_priority: int              # 1 = most protected
    threshold: float | None = None  # N, derived from the formula when None


@dataclass
class ComfortModel:
    parts: dict[str, PartComfort]
    gamma: float
    safety_limit: float        # N, same for every part

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        for pid, pc in self.parts.items():
            if pc.threshold is None:
                pc.threshold = comfort_threshold(pc.pain_limit, self.gamma, pc.sensitivity)
        worst = max(pc.threshold for pc in self.parts.values())
        if self.safety_limit < worst:
            raise ValueError(
                f"safety limit {self.safety_limit} below max threshold {worst}")

    def thresholds(self) -> dict[str, float]:
        return {pid: pc.threshold for pid, pc in self.parts.items()}

    def base_order(self) -> list[str]:
        return sorted(self.parts, key=lambda pid: (self.parts[pid].base_priority, pid))

    def copy(self) -> "ComfortModel":
        return ComfortModel(
            {pid: PartComfort(pc.pain_limit, pc.sensitivity, pc.base_priority, pc.threshold)
             for pid, pc in self.parts.items()},
            self.gamma, self.safety_limit)


def generate_feedback(model: ComfortModel, cs: ContactSet) -> Feedback | None:
    """Feedback for the most protected violating part, unless a safety-limit
    exceedance preempts; the change category scales with the excess."""
    forces = {pid: aggregate_force(cs, pid) for pid in cs.part_ids()}
    return feedback_from_forces(model, forces)


def feedback_from_forces(model: ComfortModel, forces_by_part: dict[str, float]) -> Feedback | None:
    violations = {}
    for pid, f in forces_by_part.items():
        pc = model.parts.get(pid)
        if pc is not None and f > pc.threshold:
            violations[pid] = f
    if not violations:
        return None
    over_safety = {pid: f - model.safety_limit for pid, f in violations.items()
                   if f > model.safety_limit}
    if over_safety:
        pid = max(over_safety, key=lambda p: (over_safety[p], p))
        return Feedback(pid, DELTA_DEC_LARGE)
    pid = min(violations, key=lambda p: (model.parts[p].base_priority, p))
    excess = violations[pid] - model.parts[pid].threshold
    if excess > 0.5 * model.parts[pid].threshold:
        return Feedback(pid, DELTA_DEC_LARGE)
    return Feedback(pid, DELTA_DEC_SMALL)


def apply_feedback(model: ComfortModel, fb: Feedback) -> None:
    """Scale the named part's threshold by the requested-change factor,
    clamped to [1 N, gamma * pain limit]. Mutates the model."""
    pc = model.parts.get(fb.body_part_id)
    if pc is None:
        raise KeyError(f"unknown body part {fb.body_part_id!r}")
    ceiling = model.gamma * pc.pain_limit
    pc.threshold = min(ceiling, max(THRESHOLD_FLOOR_N, pc.threshold * DELTA_FACTORS[fb.delta]))


def persona_variant(base: ComfortModel, sensitivity_scales: dict[str, float],
                    priority_order: list[str] | None = None) -> ComfortModel:
    """Derive an individual persona from the population model by scaling
    sensitivities and optionally re-ranking protection priorities."""
    parts = {}
    for pid, pc in base.parts.items():
        s = max(SENSITIVITY_FLOOR, min(1.0, pc.sensitivity * sensitivity_scales.get(pid, 1.0)))
        parts[pid] = PartComfort(pc.pain_limit, s, pc.base_priority)
    if priority_order is not None:
        for rank, pid in enumerate(priority_order, start=1):
            parts[pid].base_priority = rank
    return ComfortModel(parts, base.gamma, base.safety_limit)
