"""Ranking policies over the fixed body-part surrogate set.

The learned variant builds a full priority permutation slot by slot: each
rank slot owns a linear model, candidates at a slot are scored by an upper
confidence bound on a context that includes the partial assignment so far,
and per-slot rewards update the models with rank-one ridge steps. The
simpler variants (fixed order, violation-driven reordering, per-part UCB
sort) share the same interface so episode code treats them uniformly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SNAPSHOT_VERSION = 1

VARIANT_RANK = "linucb-rank"
VARIANT_SORTED = "linucb-sorted"
VARIANT_FIXED = "fixed"
VARIANT_HEURISTIC = "heuristic"
VARIANTS = (VARIANT_RANK, VARIANT_SORTED, VARIANT_FIXED, VARIANT_HEURISTIC)


@dataclass
class Context:
    """Features shared by all candidates at a rank slot.

    z_f: per-part max force (N); z_p: pose error magnitude; z_h: slot index
    already assigned to each part, 0 if unassigned. A constant bias entry
    is appended when vectorized.
    """
    z_f: np.ndarray
    z_p: float
    z_h: np.ndarray

    def __post_init__(self):
        self.z_f = np.asarray(self.z_f, dtype=float)
        self.z_h = np.asarray(self.z_h, dtype=float)
        if np.any(self.z_f < 0):
            raise ValueError("forces must be nonnegative")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.z_f, [self.z_p], self.z_h, [1.0]])


@dataclass
class SurrogateRanking:
    order: list[str]          # part ids, highest priority first

    def slot_of(self, part_id: str) -> int:
        """1-based slot, 0 if absent."""
        try:
            return self.order.index(part_id) + 1
        except ValueError:
            return 0


def context_dim(m: int) -> int:
    return 2 * m + 2


def build_context(part_ids: list[str], forces_by_part: dict[str, float],
                  pose_error: float, partial: SurrogateRanking) -> Context:
    """Context for the given partial assignment; z_h holds 1-based slots."""
    z_f = np.array([forces_by_part.get(p, 0.0) for p in part_ids])
    z_h = np.array([float(partial.slot_of(p)) for p in part_ids])
    return Context(z_f, float(pose_error), z_h)


class BanditSlot:
    """One linear UCB model: A = I + sum z z^T, b = sum r z, theta = A^-1 b."""

    def __init__(self, dim: int):
        self.A = np.eye(dim)
        self.b = np.zeros(dim)
        self._refresh()

    def _refresh(self):
        self.A_inv = np.linalg.inv(self.A)
        self.theta = self.A_inv @ self.b

    def ucb(self, z: np.ndarray, alpha: float) -> float:
        return float(self.theta @ z + alpha * np.sqrt(max(0.0, z @ self.A_inv @ z)))

    def update(self, z: np.ndarray, reward: float):
        if z.shape != self.b.shape:
            raise ValueError("context dimension mismatch")
        self.A += np.outer(z, z)
        self.b += reward * z
        self._refresh()

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BanditSlot":
        slot = cls(len(d["b"]))
        slot.A = np.array(d["A"], dtype=float)
        slot.b = np.array(d["b"], dtype=float)
        slot._refresh()
        return slot


@dataclass
class ComfortEstimates:
    """Threshold view the reordering heuristic and rewards run against."""
    thresholds: dict[str, float]


class RankingPolicy:
    """Priority policy over the surrogate part set.

    base_order doubles as the deterministic tie-break, which is how the
    population-level prior ordering enters without fabricating observations.
    """

    def __init__(self, variant: str, part_ids: list[str], base_order: list[str],
                 alpha: float = 1.0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        if sorted(base_order) != sorted(part_ids):
            raise ValueError("base_order must permute the part set")
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        self.variant = variant
        self.part_ids = list(part_ids)
        self.base_order = list(base_order)
        self.alpha = float(alpha)
        self.m = len(part_ids)
        d = context_dim(self.m)
        self.slots = [BanditSlot(d) for _ in range(self.m)] if variant == VARIANT_RANK else []
        self.part_models = ({p: BanditSlot(d) for p in part_ids}
                            if variant == VARIANT_SORTED else {})

    # -- selection ---------------------------------------------------------

    def select(self, context_builder, alpha: float | None = None):
        """Ranking plus the per-slot contexts used to score the winners.

        context_builder(partial: SurrogateRanking) -> Context, rebuilt with
        each hypothetical assignment while slots fill top-down.
        """
        alpha = self.alpha if alpha is None else alpha
        if self.variant == VARIANT_FIXED or self.variant == VARIANT_HEURISTIC:
            # heuristic reordering needs force data; callers use
            # heuristic_reorder and fall back to base order here
            order = list(self.base_order)
            ctx = context_builder(SurrogateRanking(order)).vector()
            return SurrogateRanking(order), [ctx] * self.m
        if self.variant == VARIANT_SORTED:
            z = context_builder(SurrogateRanking([])).vector()
            scored = []
            for rank, p in enumerate(self.base_order):
                scored.append((-self.part_models[p].ucb(z, alpha), rank, p))
            scored.sort()
            order = [p for _, _, p in scored]
            return SurrogateRanking(order), [z] * self.m
        # slot-wise construction
        order: list[str] = []
        contexts: list[np.ndarray] = []
        remaining = [p for p in self.base_order]
        for i in range(self.m):
            best_p = None
            best_z = None
            best_u = -np.inf
            for cand in remaining:
                z = context_builder(SurrogateRanking(order + [cand])).vector()
                u = self.slots[i].ucb(z, alpha)
                if u > best_u:
                    best_u, best_p, best_z = u, cand, z
            order.append(best_p)
            contexts.append(best_z)
            remaining.remove(best_p)
        return SurrogateRanking(order), contexts

    def greedy_order(self, context_builder) -> SurrogateRanking:
        ranking, _ = self.select(context_builder, alpha=0.0)
        return ranking

    def select_arrays(self, z_f: np.ndarray, z_p: float, alpha: float | None = None):
        """Same selection as select(), taking the shared features directly.

        Avoids rebuilding context objects per candidate; episode loops call
        this on every control tick.
        """
        alpha = self.alpha if alpha is None else alpha
        m = self.m
        base = np.concatenate([z_f, [float(z_p)], np.zeros(m), [1.0]])
        off = m + 1
        idx = {p: i for i, p in enumerate(self.part_ids)}
        if self.variant in (VARIANT_FIXED, VARIANT_HEURISTIC):
            order = list(self.base_order)
            z = base.copy()
            for slot, p in enumerate(order, start=1):
                z[off + idx[p]] = slot
            return SurrogateRanking(order), [z] * m
        if self.variant == VARIANT_SORTED:
            scored = [(-self.part_models[p].ucb(base, alpha), rank, p)
                      for rank, p in enumerate(self.base_order)]
            scored.sort()
            return SurrogateRanking([p for _, _, p in scored]), [base] * m
        order: list[str] = []
        contexts: list[np.ndarray] = []
        remaining = list(self.base_order)
        z = base
        for i in range(m):
            best_p, best_u, best_z = None, -np.inf, None
            for cand in remaining:
                j = off + idx[cand]
                z[j] = i + 1
                u = self.slots[i].ucb(z, alpha)
                if u > best_u:
                    best_u, best_p, best_z = u, cand, z.copy()
                z[j] = 0.0
            order.append(best_p)
            contexts.append(best_z)
            z[off + idx[best_p]] = i + 1
            remaining.remove(best_p)
        return SurrogateRanking(order), contexts

    # -- learning ----------------------------------------------------------

    def update(self, slot_contexts: list[np.ndarray], rewards: np.ndarray,
               ranking: SurrogateRanking):
        """Per-slot rank-one updates. Fixed/heuristic variants ignore this."""
        rewards = np.asarray(rewards, dtype=float)
        if len(slot_contexts) != self.m or rewards.shape != (self.m,):
            raise ValueError("need one context and reward per slot")
        if self.variant == VARIANT_RANK:
            for i in range(self.m):
                self.slots[i].update(slot_contexts[i], float(rewards[i]))
        elif self.variant == VARIANT_SORTED:
            for i, part in enumerate(ranking.order):
                self.part_models[part].update(slot_contexts[i], float(rewards[i]))

    @property
    def learns(self) -> bool:
        return self.variant in (VARIANT_RANK, VARIANT_SORTED)

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": SNAPSHOT_VERSION,
            "variant": self.variant,
            "alpha": self.alpha,
            "part_ids": self.part_ids,
            "base_order": self.base_order,
            "slots": [s.to_dict() for s in self.slots],
            "part_models": {p: s.to_dict() for p, s in self.part_models.items()},
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, d: dict) -> "RankingPolicy":
        if d.get("format_version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {d.get('format_version')}")
        pol = cls(d["variant"], d["part_ids"], d["base_order"], d["alpha"])
        if pol.variant == VARIANT_RANK:
            pol.slots = [BanditSlot.from_dict(s) for s in d["slots"]]
        elif pol.variant == VARIANT_SORTED:
            pol.part_models = {p: BanditSlot.from_dict(s) for p, s in d["part_models"].items()}
        return pol

    @classmethod
    def load(cls, path) -> "RankingPolicy":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def clone(self) -> "RankingPolicy":
        return RankingPolicy.from_dict(self.to_dict())


def heuristic_reorder(base: SurrogateRanking, forces_by_part: dict[str, float],
                      comfort: ComfortEstimates) -> SurrogateRanking:
    """Violating parts first, by descending excess; the rest keep base order."""
    excess = {}
    for p in base.order:
        e = forces_by_part.get(p, 0.0) - comfort.thresholds.get(p, np.inf)
        if e > 0:
            excess[p] = e
    violators = sorted(excess, key=lambda p: (-excess[p], base.order.index(p)))
    rest = [p for p in base.order if p not in excess]
    return SurrogateRanking(violators + rest)


DELTA_DEC_LARGE = (1, 0, 0, 0)
DELTA_DEC_SMALL = (0, 1, 0, 0)
DELTA_INC_SMALL = (0, 0, 1, 0)
DELTA_INC_LARGE = (0, 0, 0, 1)


def delta_is_decrease(delta) -> bool:
    return bool(delta[0] or delta[1])


def compute_rewards(ranking: SurrogateRanking, feedback, forces_by_part: dict[str, float],
                    comfort: ComfortEstimates, w_f: float,
                    alignment_magnitude: float = 1.0) -> np.ndarray:
    """Per-slot reward: alignment term plus shared violation penalty.

    The violation term is -w_f * max over parts of (f - f_max)+, identical
    in every slot. With feedback (b*, delta), the slot currently holding b*
    earns alignment_magnitude * (1 - 2 |slot - target| / m), target slot 1
    for a decrease request and slot m for an increase request.
    """
    if w_f <= 0:
        raise ValueError("w_f must be positive")
    m = len(ranking.order)
    worst = max((forces_by_part.get(p, 0.0) - comfort.thresholds.get(p, np.inf)
                 for p in comfort.thresholds), default=0.0)
    r = np.full(m, -w_f * max(0.0, worst))
    if feedback is not None:
        k = ranking.slot_of(feedback.body_part_id)
        if k == 0:
            raise ValueError(f"feedback names unknown part {feedback.body_part_id!r}")
        target = 1 if delta_is_decrease(feedback.delta) else m
        deviation = abs(k - target) / m
        r[k - 1] += alignment_magnitude * (1.0 - 2.0 * deviation)
    return r


def apply_to_objectives(ranking: SurrogateRanking, force_objectives: dict,
                        pose_objective=None, placement: str = "adaptive",
                        violating: set[str] | None = None):
    """Order active force objectives by the surrogate ranking and insert the
    pose objective per the placement rule."""
    from .hosc import Hierarchy

    ordered = [force_objectives[p] for p in ranking.order if p in force_objectives]
    if pose_objective is None:
        return Hierarchy(ordered)
    violating = violating or set()
    if placement == "first" or (placement == "adaptive" and not
                                any(o.body_part_id in violating for o in ordered)):
        return Hierarchy([pose_objective] + ordered)
    if placement == "last":
        return Hierarchy(ordered + [pose_objective])
    # adaptive with violations: directly below the last violating objective
    last = max(i for i, o in enumerate(ordered) if o.body_part_id in violating)
    return Hierarchy(ordered[: last + 1] + [pose_objective] + ordered[last + 1:])
