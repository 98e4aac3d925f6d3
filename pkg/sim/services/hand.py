# sim/services/hand.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from core.pydantic_models import FingerModel, HandSection
from core.utils.rotations import quat_from_rotvec, quat_multiply, quat_to_rotvec
from core.utils.units import wrap_rad
from sim.services.geometry import Pose

logger = logging.getLogger(__name__)

DEFAULT_LINKS = (0.045, 0.030)
DEFAULT_LIMITS = (0.0, 1.6)
DEFAULT_TIP_RADIUS = 0.008
DEFAULT_SPLAY = 0.4
PALM_HALF_WIDTH = 0.05
FINGER_SPACING = 0.015


@dataclass(frozen=True)
class FingerSpec:
    """
    One planar 2-link finger. In the mount frame the straight finger points
    along +z and flexion rotates about +y, curling the tip toward +x.
    """
    name: str
    mount: Pose
    link_lengths: Tuple[float, float]
    joint_limits: Tuple[Tuple[float, float], Tuple[float, float]]

    def __post_init__(self):
        if min(self.link_lengths) <= 0.0:
            raise ValueError(f"{self.name}: link lengths must be > 0")
        for lo, hi in self.joint_limits:
            if not lo < hi:
                raise ValueError(f"{self.name}: joint limits need lo < hi")

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))


@dataclass(frozen=True)
class HandModel:
    fingers: Tuple[FingerSpec, ...]
    fingertip_radius: float = DEFAULT_TIP_RADIUS

    def __post_init__(self):
        if len(self.fingers) < 2:
            raise ValueError("a hand needs at least two fingers")
        if self.fingertip_radius <= 0.0:
            raise ValueError("fingertip radius must be > 0")

    @property
    def finger_count(self) -> int:
        return len(self.fingers)

    @property
    def joint_count(self) -> int:
        return 2 * len(self.fingers)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lim[0] for f in self.fingers for lim in f.joint_limits])

    @property
    def upper(self) -> np.ndarray:
        return np.array([lim[1] for f in self.fingers for lim in f.joint_limits])

    @property
    def max_finger_reach(self) -> float:
        return max(f.reach for f in self.fingers)

    def index_of(self, name: str, default: int) -> int:
        for i, f in enumerate(self.fingers):
            if f.name == name:
                return i
        return default

    @property
    def thumb_index(self) -> int:
        return self.index_of("thumb", 0)

    @property
    def opposing_index(self) -> int:
        """Finger used for aperture: 'middle' if present, else the last one."""
        return self.index_of("middle", self.finger_count - 1)

    def opening(self, fraction: float) -> np.ndarray:
        lo, hi = self.lower, self.upper
        return lo + fraction * (hi - lo)


@dataclass(frozen=True, eq=False)
class HandConfig:
    """Palm pose (world) plus 2F joint angles; build through `make` to clamp."""
    palm: Pose
    joints: np.ndarray

    @classmethod
    def make(cls, palm: Pose, joints, model: HandModel) -> "HandConfig":
        j = np.asarray(joints, dtype=float).reshape(-1)
        if j.size != model.joint_count:
            raise ValueError(f"expected {model.joint_count} joints, got {j.size}")
        j = clamp_to_limits(j, model)
        j.setflags(write=False)
        return cls(palm=palm, joints=j)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.palm.as_vector(), self.joints])

    @classmethod
    def from_vector(cls, v, model: HandModel) -> "HandConfig":
        v = np.asarray(v, dtype=float)
        return cls.make(Pose.from_vector(v[:7]), v[7:], model)


# x = (R, p, q)
FullPose = HandConfig


# ---------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------
def planar_tip(q1: float, q2: float, l1: float, l2: float) -> np.ndarray:
    """Tip in the mount frame."""
    return np.array([
        l1 * math.sin(q1) + l2 * math.sin(q1 + q2),
        0.0,
        l1 * math.cos(q1) + l2 * math.cos(q1 + q2),
    ])


def fingertips_in_palm(joints, model: HandModel) -> np.ndarray:
    j = np.asarray(joints, dtype=float)
    out = np.empty((model.finger_count, 3))
    for i, f in enumerate(model.fingers):
        local = planar_tip(j[2 * i], j[2 * i + 1], *f.link_lengths)
        out[i] = f.mount.apply(local)
    return out


def fingertip_positions(config: HandConfig, model: HandModel) -> np.ndarray:
    """(F, 3) world-frame fingertip sphere centres."""
    return config.palm.apply(fingertips_in_palm(config.joints, model))


def clamp_to_limits(joints, model: HandModel) -> np.ndarray:
    return np.clip(np.asarray(joints, dtype=float), model.lower, model.upper)


# ---------------------------------------------------------------------
# Built-in hand
# ---------------------------------------------------------------------
def _rot_y(angle: float) -> np.ndarray:
    return quat_from_rotvec([0.0, angle, 0.0])


@lru_cache(maxsize=8)
def _default_hand(radius: float) -> HandModel:
    limits = (DEFAULT_LIMITS, DEFAULT_LIMITS)
    # thumb curls toward +x; the finger row is turned half a revolution about z so it curls toward -x
    thumb = FingerSpec("thumb", Pose(_rot_y(-DEFAULT_SPLAY), (-PALM_HALF_WIDTH, 0.0, 0.0)), DEFAULT_LINKS, limits)
    turned = quat_multiply(quat_from_rotvec([0.0, 0.0, math.pi]), _rot_y(-DEFAULT_SPLAY))
    fingers = [thumb]
    for name, y in (("index", -FINGER_SPACING), ("middle", 0.0), ("ring", FINGER_SPACING)):
        fingers.append(FingerSpec(name, Pose(turned, (PALM_HALF_WIDTH, y, 0.0)), DEFAULT_LINKS, limits))
    return HandModel(fingers=tuple(fingers), fingertip_radius=radius)


def default_hand(fingertip_radius: float = DEFAULT_TIP_RADIUS) -> HandModel:
    """Thumb opposed to a row of three fingers, 2 flexion joints each."""
    return _default_hand(float(fingertip_radius))


def max_aperture(model: HandModel, open_fraction: float = 0.2) -> float:
    """Thumb-to-opposing-finger gap along palm x at the pre-grasp opening, minus both tip radii."""
    tips = fingertips_in_palm(model.opening(open_fraction), model)
    gap = abs(tips[model.opposing_index, 0] - tips[model.thumb_index, 0])
    return float(gap - 2.0 * model.fingertip_radius)


# ---------------------------------------------------------------------
# Config round trip
# ---------------------------------------------------------------------
def hand_to_section(model: HandModel) -> HandSection:
    fingers = [
        FingerModel(
            name=f.name,
            mount_position=tuple(float(v) for v in f.mount.position),
            mount_rotvec=tuple(float(v) for v in quat_to_rotvec(f.mount.quat)),
            link_lengths=tuple(f.link_lengths),
            joint_limits=tuple(tuple(lim) for lim in f.joint_limits),
        )
        for f in model.fingers
    ]
    return HandSection(fingertip_radius=model.fingertip_radius, fingers=fingers)


def hand_from_section(section: Optional[HandSection]) -> HandModel:
    if section is None:
        return default_hand()
    if section.fingers is None:
        return default_hand(section.fingertip_radius)
    fingers = tuple(
        FingerSpec(
            name=f.name,
            mount=Pose(quat_from_rotvec(f.mount_rotvec), f.mount_position),
            link_lengths=tuple(f.link_lengths),
            joint_limits=tuple(tuple(lim) for lim in f.joint_limits),
        )
        for f in section.fingers
    )
    return HandModel(fingers=fingers, fingertip_radius=section.fingertip_radius)


# ---------------------------------------------------------------------
# Per-finger joint-space solve
# ---------------------------------------------------------------------
def solve_finger(
    model: HandModel,
    finger: int,
    target_in_palm: Sequence[float],
    *,
    max_iters: int = 200,
    q_init: Optional[Sequence[float]] = None,
) -> Tuple[np.ndarray, float]:
    """
    Coordinate descent over the two flexion joints: each sweep sets the
    proximal joint to the angle that points the current tip at the target,
    then the distal joint likewise, both clamped to limits.
    Returns (q1, q2) and the 3-D residual distance in metres.
    """
    f = model.fingers[finger]
    l1, l2 = f.link_lengths
    (lo1, hi1), (lo2, hi2) = f.joint_limits
    t = f.mount.apply_inverse(np.asarray(target_in_palm, dtype=float))
    tx, tz = float(t[0]), float(t[2])

    if q_init is None:
        q1, q2 = lo1 + 0.2 * (hi1 - lo1), lo2 + 0.2 * (hi2 - lo2)
    else:
        q1, q2 = float(q_init[0]), float(q_init[1])

    target_angle = math.atan2(tx, tz)
    for _ in range(max_iters):
        prev = (q1, q2)
        tip = planar_tip(q1, q2, l1, l2)
        # the tip rotates rigidly with q1 about the mount origin
        q1 = min(max(q1 + wrap_rad(target_angle - math.atan2(tip[0], tip[2])), lo1), hi1)
        jx, jz = l1 * math.sin(q1), l1 * math.cos(q1)
        q2 = min(max(math.atan2(tx - jx, tz - jz) - q1, lo2), hi2)
        if abs(q1 - prev[0]) < 1e-12 and abs(q2 - prev[1]) < 1e-12:
            break

    residual = float(np.linalg.norm(planar_tip(q1, q2, l1, l2) - t))
    return np.array([q1, q2]), residual


__all__ = [
    "FingerSpec",
    "HandModel",
    "HandConfig",
    "FullPose",
    "planar_tip",
    "fingertips_in_palm",
    "fingertip_positions",
    "clamp_to_limits",
    "default_hand",
    "max_aperture",
    "hand_to_section",
    "hand_from_section",
    "solve_finger",
]
