# sim/services/skill.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.enums import GraspAxis
from core.errors import TrajectoryIndexError, UnreachableGraspError
from core.pydantic_models import SkillSection
from core.utils.rotations import quat_conjugate, quat_from_matrix, quat_multiply, quat_to_rotvec
from sim.services.geometry import Pose, Ray, SuperquadricShape, pose_interpolate, ray_intersect, surface_normal
from sim.services.hand import HandConfig, HandModel, clamp_to_limits, max_aperture, solve_finger
from sim.services.physics import SimAction

logger = logging.getLogger(__name__)

# how far outside the object the contact rays start, metres
_RAY_CLEARANCE = 0.05


@dataclass(frozen=True)
class SkillParam:
    """z: approach direction, opposition axis and pre-grasp standoff."""
    elevation: float
    azimuth: float
    grasp_axis: GraspAxis = GraspAxis.X
    standoff: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.elevation <= math.pi / 2.0 + 1e-12):
            raise ValueError(f"elevation {self.elevation} outside (0, pi/2]")
        if not (0.05 <= self.standoff <= 0.25):
            raise ValueError(f"standoff {self.standoff} outside [0.05, 0.25] m")
        object.__setattr__(self, "grasp_axis", GraspAxis(self.grasp_axis))

    def to_dict(self) -> dict:
        return {
            "elevation": float(self.elevation),
            "azimuth": float(self.azimuth),
            "grasp_axis": self.grasp_axis.value,
            "standoff": float(self.standoff),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkillParam":
        return cls(float(d["elevation"]), float(d["azimuth"]), GraspAxis(d["grasp_axis"]), float(d["standoff"]))


@dataclass(frozen=True, eq=False)
class ReferenceTrajectory:
    x0: HandConfig
    xg: HandConfig
    horizon: int = 50

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {self.horizon}")


@dataclass(frozen=True, eq=False)
class GraspPlan:
    """Grasp pose plus the object-frame contacts (thumb first) and fingertip centre targets."""
    grasp: HandConfig
    contacts: np.ndarray       # (F, 3) object frame, on the surface
    normals: np.ndarray        # (F, 3) object frame, outward
    tip_targets: np.ndarray    # (F, 3) object frame, sphere centres
    residual: float
    palm_depth: float


# ---------------------------------------------------------------------
# Directions and orientation
# ---------------------------------------------------------------------
def approach_direction(z: SkillParam) -> np.ndarray:
    """Unit vector from the object toward the pre-grasp palm position (world)."""
    ce = math.cos(z.elevation)
    return np.array([-ce * math.cos(z.azimuth), -ce * math.sin(z.azimuth), math.sin(z.elevation)])


def _axis_vectors(axis: GraspAxis) -> Tuple[np.ndarray, np.ndarray]:
    """(opposition axis, finger-row axis) in the object frame."""
    e_axis = np.array([1.0, 0.0, 0.0]) if axis == GraspAxis.X else np.array([0.0, 1.0, 0.0])
    row = np.cross(e_axis, [0.0, 0.0, 1.0])
    return e_axis, row


def palm_orientation(object_pose: Pose, z: SkillParam) -> np.ndarray:
    """
    Palm +z along -approach direction; roll chosen so +x points from thumb to
    fingers along the grasp axis and the finger row stays as close to
    horizontal as the approach allows.
    """
    e_axis, row = _axis_vectors(z.grasp_axis)
    row_w = object_pose.rotate(row)
    row_w[2] = 0.0
    row_w /= np.linalg.norm(row_w)
    z_axis = -approach_direction(z)
    x_axis = np.cross(row_w, z_axis)
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(z_axis, x_axis)
    return quat_from_matrix(np.column_stack([x_axis, y_axis, z_axis]))


# ---------------------------------------------------------------------
# Grasp synthesis
# ---------------------------------------------------------------------
def _contact(shape: SuperquadricShape, origin: np.ndarray, direction: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ray = Ray(origin, direction)
    t = ray_intersect(ray, shape, Pose())
    if t is None:
        raise UnreachableGraspError(f"contact ray from {origin.round(4).tolist()} missed the object")
    point = ray.at(t)
    return point, surface_normal(point, shape)


def plan_grasp(
    shape: SuperquadricShape,
    object_pose: Pose,
    z: SkillParam,
    hand: HandModel,
    skill: Optional[SkillSection] = None,
) -> GraspPlan:
    """
    Opposition contacts: the thumb on the -axis side, every other finger on
    the +axis side offset along the finger row by its mount offset. Palm
    depth is searched so the per-finger solve puts every sphere centre
    within tolerance of its target.
    """
    cfg = skill or SkillSection()
    e_axis, row = _axis_vectors(z.grasp_axis)
    half_width = shape.a1 if z.grasp_axis == GraspAxis.X else shape.a2
    aperture = max_aperture(hand, cfg.pregrasp_open_fraction)
    if 2.0 * half_width > aperture:
        raise UnreachableGraspError(
            f"opposition width {2.0 * half_width:.4f} m exceeds hand aperture {aperture:.4f} m")

    thumb = hand.thumb_index
    reach = half_width + _RAY_CLEARANCE
    contacts = np.zeros((hand.finger_count, 3))
    normals = np.zeros((hand.finger_count, 3))
    for i, finger in enumerate(hand.fingers):
        offset = float(finger.mount.position[1]) * row
        if i == thumb:
            contacts[i], normals[i] = _contact(shape, offset - reach * e_axis, e_axis)
        else:
            contacts[i], normals[i] = _contact(shape, offset + reach * e_axis, -e_axis)

    targets_obj = contacts + (hand.fingertip_radius - cfg.squeeze_depth) * normals
    # each planar finger can only reach its own flexion plane
    for i, finger in enumerate(hand.fingers):
        along_row = float(finger.mount.position[1]) - float(targets_obj[i] @ row)
        targets_obj[i] += along_row * row
    targets_w = object_pose.apply(targets_obj)

    q_palm = palm_orientation(object_pose, z)
    z_axis = -approach_direction(z)
    others = [i for i in range(hand.finger_count) if i != thumb]
    centre = 0.5 * (targets_w[thumb] + targets_w[others].mean(axis=0))

    best: Optional[Tuple[float, float, np.ndarray]] = None
    lo, hi = cfg.palm_depth_range
    for depth in np.arange(lo, hi + 1e-12, cfg.palm_depth_step):
        palm = Pose(q_palm, centre - depth * z_axis)
        local = palm.apply_inverse(targets_w)
        joints = np.zeros(hand.joint_count)
        worst = 0.0
        for i in range(hand.finger_count):
            q, res = solve_finger(hand, i, local[i], max_iters=cfg.ik_max_iters)
            joints[2 * i:2 * i + 2] = q
            worst = max(worst, res)
        if best is None or worst < best[0]:
            best = (worst, float(depth), joints)

    residual, depth, joints = best
    if residual > cfg.ik_tolerance:
        raise UnreachableGraspError(
            f"fingertip residual {residual * 1000:.2f} mm above {cfg.ik_tolerance * 1000:.1f} mm",
            residual_m=residual,
        )
    grasp = HandConfig.make(Pose(q_palm, centre - depth * z_axis), joints, hand)
    return GraspPlan(grasp, contacts, normals, targets_obj, residual, depth)


def grasp_pose(
    shape: SuperquadricShape,
    object_pose: Pose,
    z: SkillParam,
    hand: HandModel,
    skill: Optional[SkillSection] = None,
) -> HandConfig:
    return plan_grasp(shape, object_pose, z, hand, skill).grasp


def pregrasp_pose(xg: HandConfig, z: SkillParam, hand: HandModel, open_fraction: float = 0.2) -> HandConfig:
    palm = Pose(xg.palm.quat, xg.palm.position + z.standoff * approach_direction(z))
    return HandConfig.make(palm, hand.opening(open_fraction), hand)


def approach_start(
    shape: SuperquadricShape,
    object_pose: Pose,
    z: SkillParam,
    hand: HandModel,
    open_fraction: float = 0.2,
) -> HandConfig:
    """
    Canonical pre-grasp used when synthesis fails: palm standoff + reach
    above the object top along the approach direction, same roll rule.
    """
    top = object_pose.position + np.array([0.0, 0.0, shape.a3])
    dist = z.standoff + hand.max_finger_reach
    palm = Pose(palm_orientation(object_pose, z), top + dist * approach_direction(z))
    return HandConfig.make(palm, hand.opening(open_fraction), hand)


def make_reference(
    shape: SuperquadricShape,
    object_pose: Pose,
    z: SkillParam,
    hand: HandModel,
    skill: Optional[SkillSection] = None,
) -> Tuple[GraspPlan, ReferenceTrajectory]:
    cfg = skill or SkillSection()
    plan = plan_grasp(shape, object_pose, z, hand, cfg)
    x0 = pregrasp_pose(plan.grasp, z, hand, cfg.pregrasp_open_fraction)
    return plan, ReferenceTrajectory(x0, plan.grasp, cfg.horizon)


# ---------------------------------------------------------------------
# Trajectory evaluation / composition
# ---------------------------------------------------------------------
def reference_at(traj: ReferenceTrajectory, t: int) -> HandConfig:
    if t < 0 or t > traj.horizon:
        raise TrajectoryIndexError(f"step {t} outside [0, {traj.horizon}]")
    if t == 0:
        return traj.x0
    if t == traj.horizon:
        return traj.xg
    alpha = t / traj.horizon
    palm = pose_interpolate(traj.x0.palm, traj.xg.palm, alpha)
    joints = traj.x0.joints + alpha * (traj.xg.joints - traj.x0.joints)
    return HandConfig(palm=palm, joints=joints)


def lift_reference(xg: HandConfig, k: int, lift_steps: int = 25, lift_height: float = 0.15) -> HandConfig:
    """Lift-hold suffix: palm raised linearly in world z, joints held."""
    if k < 0 or k > lift_steps:
        raise TrajectoryIndexError(f"lift step {k} outside [0, {lift_steps}]")
    if k == 0:
        return xg
    rise = np.array([0.0, 0.0, lift_height * k / lift_steps])
    return HandConfig(palm=Pose(xg.palm.quat, xg.palm.position + rise), joints=xg.joints)


def episode_length(skill: Optional[SkillSection] = None) -> int:
    """Reference steps plus the lift-hold suffix."""
    cfg = skill or SkillSection()
    return cfg.horizon + cfg.lift_steps


def reference_pair(
    traj: ReferenceTrajectory, t: int, skill: Optional[SkillSection] = None,
) -> Tuple[HandConfig, HandConfig]:
    """(reference now, reference next) for control step t of a full episode."""
    cfg = skill or SkillSection()
    if t < 0 or t >= traj.horizon + cfg.lift_steps:
        raise TrajectoryIndexError(f"episode step {t} outside [0, {traj.horizon + cfg.lift_steps})")
    if t < traj.horizon:
        return reference_at(traj, t), reference_at(traj, t + 1)
    k = t - traj.horizon
    return (lift_reference(traj.xg, k, cfg.lift_steps, cfg.lift_height),
            lift_reference(traj.xg, k + 1, cfg.lift_steps, cfg.lift_height))


def residual_bounds(hand: HandModel, skill: Optional[SkillSection] = None) -> np.ndarray:
    cfg = skill or SkillSection()
    return np.concatenate([
        np.full(3, cfg.residual_pos),
        np.full(3, cfg.residual_rot),
        np.full(hand.joint_count, cfg.residual_joint),
    ])


def pose_delta(a: Pose, b: Pose) -> np.ndarray:
    """(dp, dr) taking a to b: b.p = a.p + dp, b.q = exp(dr) * a.q."""
    dq = quat_multiply(b.quat, quat_conjugate(a.quat))
    return np.concatenate([b.position - a.position, quat_to_rotvec(dq)])


def compose_action(
    ref_now: HandConfig,
    ref_next: HandConfig,
    residual,
    hand: HandModel,
    skill: Optional[SkillSection] = None,
) -> SimAction:
    """Reference step plus clamped residual; joint targets clamped to limits."""
    bounds = residual_bounds(hand, skill)
    r = np.clip(np.asarray(residual, dtype=float).reshape(-1), -bounds, bounds)
    delta = pose_delta(ref_now.palm, ref_next.palm) + r[:6]
    joints = clamp_to_limits(np.asarray(ref_next.joints) + r[6:], hand)
    return SimAction.create(delta, joints)


def transform_reference(traj: ReferenceTrajectory, t_obj: Pose) -> ReferenceTrajectory:
    return ReferenceTrajectory(
        HandConfig(palm=t_obj.compose(traj.x0.palm), joints=traj.x0.joints),
        HandConfig(palm=t_obj.compose(traj.xg.palm), joints=traj.xg.joints),
        traj.horizon,
    )


__all__ = [
    "SkillParam",
    "ReferenceTrajectory",
    "GraspPlan",
    "approach_direction",
    "palm_orientation",
    "plan_grasp",
    "grasp_pose",
    "pregrasp_pose",
    "approach_start",
    "make_reference",
    "reference_at",
    "lift_reference",
    "episode_length",
    "reference_pair",
    "residual_bounds",
    "pose_delta",
    "compose_action",
    "transform_reference",
]
