# learning/services/rewards.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from core.pydantic_models import RewardSection
from sim.services.geometry import Pose
from sim.services.hand import fingertip_positions
from sim.services.physics import SimState


@dataclass(frozen=True)
class RewardBreakdown:
    dist: float
    force: float
    pick: float

    @property
    def total(self) -> float:
        return self.dist + self.force + self.pick

    def as_dict(self) -> Dict[str, float]:
        return {"dist": self.dist, "force": self.force, "pick": self.pick, "total": self.total}


def force_band(magnitude: float, lo: float, hi: float) -> float:
    """1 inside [lo, hi]; linear ramps to 0 at 0 N and at 2 * hi."""
    f = float(magnitude)
    if f <= 0.0 or f >= 2.0 * hi:
        return 0.0
    if f < lo:
        return f / lo if lo > 0.0 else 1.0
    if f <= hi:
        return 1.0
    return (2.0 * hi - f) / hi


def tip_target_distances(state: SimState, contact_targets: np.ndarray, object_pose: Optional[Pose] = None) -> np.ndarray:
    """
    Per-finger distance from fingertip centre to its object-frame target.
    Targets are placed by `object_pose`, the state's own pose when omitted.
    """
    tips = fingertip_positions(state.hand, state.hand_model)
    pose = object_pose if object_pose is not None else state.object_pose
    targets = pose.apply(np.asarray(contact_targets, dtype=float))
    return np.linalg.norm(tips - targets, axis=1)


def normal_force(contact) -> float:
    """Magnitude of the normal component of a fingertip contact force (pressing into the object)."""
    if not contact.in_contact:
        return 0.0
    return max(0.0, -float(contact.force @ contact.normal))


def reward(
    prev: SimState,
    nxt: SimState,
    contact_targets: np.ndarray,
    weights: Optional[RewardSection] = None,
) -> RewardBreakdown:
    """
    r_dist: progress of every fingertip toward its target, both distances
    measured against targets placed by nxt.object_pose (zero while the hand
    is static, even when the object moves); r_force: banded normal force averaged over
    fingers; r_pick: the bonus on the step the success latch first sets.
    """
    w = weights or RewardSection()
    lo, hi = w.force_band
    placed_by = nxt.object_pose
    progress = (tip_target_distances(prev, contact_targets, placed_by)
                - tip_target_distances(nxt, contact_targets, placed_by))
    r_dist = w.w_dist * float(progress.sum())
    n = max(len(nxt.contacts), 1)
    r_force = w.w_force * sum(force_band(normal_force(c), lo, hi) for c in nxt.contacts) / n
    r_pick = w.pick_bonus if (nxt.success_latched and not prev.success_latched) else 0.0
    return RewardBreakdown(r_dist, float(r_force), float(r_pick))


__all__ = [
    "RewardBreakdown",
    "force_band",
    "tip_target_distances",
    "normal_force",
    "reward",
]
