# sim/services/physics.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from core.errors import InvalidShapeError, SimulationDivergedError
from core.pydantic_models import SimSection
from core.utils.rotations import quat_from_rotvec, quat_multiply
from sim.services.geometry import (
    Pose,
    SuperquadricShape,
    box_inertia_diag,
    implicit_value,
    shape_volume,
    support_height,
    support_point,
    support_value,
    surface_normals,
)
from sim.services.hand import HandConfig, HandModel, default_hand, fingertips_in_palm, planar_tip

logger = logging.getLogger(__name__)

# the run-config section doubles as the simulator config
SimConfig = SimSection

# palm +z (approach axis) pointing straight down
HOME_QUAT = quat_from_rotvec([math.pi, 0.0, 0.0])
# stiffest oscillation allowed per substep, radians
_MAX_PHASE_PER_SUBSTEP = 0.8
_DOWN = np.array([0.0, 0.0, -1.0])
# support directions fanned around straight down; their support points span the table contact patch
_PATCH_TILT = 0.15
_PATCH_DIRS = np.array([
    [_PATCH_TILT, 0.0, -1.0],
    [0.0, _PATCH_TILT, -1.0],
    [-_PATCH_TILT, 0.0, -1.0],
    [0.0, -_PATCH_TILT, -1.0],
]) / math.sqrt(1.0 + _PATCH_TILT * _PATCH_TILT)
_SQUEEZE_BISECT_ITERS = 16
_YIELD_ITERS = 12
_YIELD_FD = 1e-4
# largest joint change per yield iteration, radians
_YIELD_MAX_STEP = 0.3


# ---------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ContactRecord:
    in_contact: bool = False
    point: np.ndarray = field(default_factory=lambda: np.zeros(3))    # world
    normal: np.ndarray = field(default_factory=lambda: np.zeros(3))   # world, outward from the object
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))    # on the object, N

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.force))


@dataclass(frozen=True, eq=False)
class SimAction:
    """Palm delta (dp 3, rotation vector 3) plus absolute joint targets."""
    delta_palm: np.ndarray
    target_joints: np.ndarray

    @classmethod
    def create(cls, delta_palm, target_joints, max_pos: float = 0.02, max_rot: float = 0.1) -> "SimAction":
        d = np.array(delta_palm, dtype=float).reshape(6)
        n_p = float(np.linalg.norm(d[:3]))
        if n_p > max_pos:
            d[:3] *= max_pos / n_p
        n_r = float(np.linalg.norm(d[3:]))
        if n_r > max_rot:
            d[3:] *= max_rot / n_r
        return cls(delta_palm=d, target_joints=np.array(target_joints, dtype=float).reshape(-1))

    @classmethod
    def hold(cls, joints) -> "SimAction":
        return cls(delta_palm=np.zeros(6), target_joints=np.array(joints, dtype=float))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.delta_palm, self.target_joints])


@dataclass(frozen=True, eq=False)
class SimState:
    hand: HandConfig
    object_pose: Pose
    object_velocity: np.ndarray             # (vx, vy, vz, wx, wy, wz), world
    contacts: Tuple[ContactRecord, ...]
    time_step_index: int
    shape: SuperquadricShape
    success_latched: bool
    # supplemented bookkeeping
    hand_model: HandModel
    config: SimSection
    camera: object
    seed: int
    mass: float
    inertia: np.ndarray                     # body-frame diagonal
    substeps: int
    rest_z: float
    slip: np.ndarray                        # per finger, metres, accumulated while lifted
    anchors: np.ndarray                     # (F, 3) object-frame friction anchors, NaN when free
    supported: bool = True
    contact_onset: int = -1

    @property
    def slip_metric(self) -> float:
        return float(np.max(self.slip)) if self.slip.size else 0.0

    @property
    def contact_count(self) -> int:
        bit = self.config.contact_force_bit
        return sum(1 for c in self.contacts if c.magnitude > bit)


# ---------------------------------------------------------------------
# Reset / placement
# ---------------------------------------------------------------------
def substep_count(mass: float, finger_count: int, config: SimSection) -> int:
    omega = math.sqrt(3.0 * (finger_count * config.k_n + config.table_k) / mass)
    n = math.ceil(config.dt * omega / _MAX_PHASE_PER_SUBSTEP)
    return int(min(max(n, config.min_substeps), config.max_substeps))


def home_hand(model: HandModel, config: SimSection) -> HandConfig:
    return HandConfig.make(Pose(HOME_QUAT, config.home_position), model.opening(0.2), model)


def _free_contacts(n: int) -> Tuple[ContactRecord, ...]:
    return tuple(ContactRecord() for _ in range(n))


def reset(
    shape: SuperquadricShape,
    object_pose: Pose,
    camera=None,
    seed: int = 0,
    hand_model: Optional[HandModel] = None,
    config: Optional[SimSection] = None,
) -> SimState:
    """
    Object resting on the table (centroid raised to the support height of
    its orientation), hand at the home pose, everything at rest.
    """
    if not isinstance(shape, SuperquadricShape):
        raise InvalidShapeError(f"expected SuperquadricShape, got {type(shape).__name__}")
    model = hand_model or default_hand()
    cfg = config or SimSection()

    rest_z = support_height(shape, object_pose.quat)
    pose = Pose(object_pose.quat, (object_pose.position[0], object_pose.position[1], rest_z))
    mass = shape_volume(shape) * cfg.density
    n = model.finger_count

    return SimState(
        hand=home_hand(model, cfg),
        object_pose=pose,
        object_velocity=np.zeros(6),
        contacts=_free_contacts(n),
        time_step_index=0,
        shape=shape,
        success_latched=False,
        hand_model=model,
        config=cfg,
        camera=camera,
        seed=int(seed),
        mass=mass,
        inertia=box_inertia_diag(shape, mass),
        substeps=substep_count(mass, n, cfg),
        rest_z=rest_z,
        slip=np.zeros(n),
        anchors=np.full((n, 3), np.nan),
    )


def place_hand(state: SimState, hand: HandConfig) -> SimState:
    """Teleport the hand (stands in for the collision-free approach phase)."""
    n = state.hand_model.finger_count
    return replace(state, hand=hand, contacts=_free_contacts(n), anchors=np.full((n, 3), np.nan))


# ---------------------------------------------------------------------
# Contact model
# ---------------------------------------------------------------------
def _tip_penetration(tips_obj: np.ndarray, shape: SuperquadricShape, radius: float):
    """
    For fingertip centres in the object frame returns (depth, surface point,
    outward normal). The surface point is the radial projection of the
    centre; depth > 0 means the sphere overlaps the object.
    """
    n = tips_obj.shape[0]
    depth = np.full(n, -np.inf)
    surf = np.zeros((n, 3))
    normal = np.zeros((n, 3))
    norm_c = np.linalg.norm(tips_obj, axis=1)
    reach = float(np.max(shape.aabb_half_extents()) * math.sqrt(3.0)) + radius
    near = (norm_c > 1e-9) & (norm_c < reach)
    if not np.any(near):
        return depth, surf, normal

    c = tips_obj[near]
    f = implicit_value(c, shape)
    with np.errstate(over="ignore", divide="ignore"):
        scale = np.power(np.maximum(f + 1.0, 1e-300), -shape.eps1 / 2.0)
    s = c * scale[:, None]
    nrm = surface_normals(s, shape)
    c_hat = c / norm_c[near][:, None]
    bad = np.linalg.norm(nrm, axis=1) < 0.5
    nrm[bad] = c_hat[bad]
    gap = (norm_c[near] - np.linalg.norm(s, axis=1)) * np.einsum("ij,ij->i", nrm, c_hat)

    depth[near] = radius - gap
    surf[near] = s
    normal[near] = nrm
    return depth, surf, normal


def _finger_depth(model: HandModel, i: int, palm: Pose, obj: Pose, shape: SuperquadricShape, j) -> float:
    f = model.fingers[i]
    tip = palm.apply(f.mount.apply(planar_tip(j[0], j[1], *f.link_lengths)))
    depth, _, _ = _tip_penetration(obj.apply_inverse(tip)[None, :], shape, model.fingertip_radius)
    return float(depth[0])


def _yield_finger(model: HandModel, i: int, palm: Pose, obj: Pose, shape: SuperquadricShape,
                  j: np.ndarray, limit: float) -> np.ndarray:
    """Newton steps on the finger's own two joints until its tip is back within `limit`."""
    k = slice(2 * i, 2 * i + 2)
    lo, hi = model.lower[k], model.upper[k]
    for _ in range(_YIELD_ITERS):
        d = _finger_depth(model, i, palm, obj, shape, j)
        if d <= limit:
            break
        g = np.array([(_finger_depth(model, i, palm, obj, shape, j + _YIELD_FD * e) - d) / _YIELD_FD
                      for e in np.eye(2)])
        gg = float(g @ g)
        if not math.isfinite(gg) or gg < 1e-12:
            break
        dj = -(d - 0.9 * limit) * g / gg
        n_dj = float(np.linalg.norm(dj))
        if n_dj > _YIELD_MAX_STEP:
            dj *= _YIELD_MAX_STEP / n_dj
        nxt = np.clip(j + dj, lo, hi)
        if np.array_equal(nxt, j):
            break
        j = nxt
    return j


def yield_depths(model: HandModel, config: SimSection) -> np.ndarray:
    """Per-finger yield depth; the thumb holds out against the whole finger row."""
    limits = np.full(model.finger_count, config.yield_depth)
    limits[model.thumb_index] = config.thumb_yield_depth
    return limits


def compliant_joints(model: HandModel, palm: Pose, obj: Pose, shape: SuperquadricShape,
                     q0, q1, limits) -> np.ndarray:
    """
    Joint positions reached by one step of compliant tracking from q0 toward
    the rate-limited targets q1, with the palm at `palm` and the object at
    `obj`. Finger i advances only as far as keeps its tip at most limits[i]
    inside the object; a finger already deeper (the palm or the object moved
    into it) yields until it is back at its limit.
    """
    q0 = np.asarray(q0, dtype=float)
    q = np.array(q1, dtype=float)
    for i in range(model.finger_count):
        limit = float(limits[i])
        k = slice(2 * i, 2 * i + 2)
        if _finger_depth(model, i, palm, obj, shape, q[k]) <= limit:
            continue
        start = q0[k].copy()
        if _finger_depth(model, i, palm, obj, shape, start) > limit:
            q[k] = _yield_finger(model, i, palm, obj, shape, start, limit)
            continue
        ok, bad = 0.0, 1.0
        for _ in range(_SQUEEZE_BISECT_ITERS):
            mid = 0.5 * (ok + bad)
            if _finger_depth(model, i, palm, obj, shape, start + mid * (q[k] - start)) <= limit:
                ok = mid
            else:
                bad = mid
        q[k] = start + ok * (q[k] - start)
    return q


def table_patch_point(shape: SuperquadricShape, rot: np.ndarray, position: np.ndarray) -> np.ndarray:
    """
    World point where the table reaction acts: the centroid of the support
    points for directions fanned around straight down, dropped to the
    lowest surface height. A resting face gives its centre, an edge or
    corner gives a point on it.
    """
    pts = np.array([support_point(shape, rot.T @ d) for d in _PATCH_DIRS])
    # opposite directions summed first so a symmetric rest gives an exactly centred point
    mean = 0.25 * ((pts[0] + pts[2]) + (pts[1] + pts[3]))
    c = position + rot @ mean
    c[2] = position[2] - support_value(shape, rot.T @ _DOWN)
    return c


# ---------------------------------------------------------------------
# Step
# ---------------------------------------------------------------------
def _palm_at(p0: np.ndarray, q0: np.ndarray, dp: np.ndarray, dr: np.ndarray, frac: float) -> Tuple[np.ndarray, np.ndarray]:
    return p0 + frac * dp, quat_multiply(quat_from_rotvec(frac * dr), q0)


def step(state: SimState, action: SimAction) -> SimState:
    """
    One control step of dt, integrated with `state.substeps` semi-implicit
    Euler substeps. Raises SimulationDivergedError on runaway object speed.

    The palm follows its delta exactly. Joints move toward their targets at
    joint_speed but comply with contact, so a squeeze settles at the
    yield depths. The table is a half-space penalty spring preloaded with
    the object's weight; it pushes at the support patch, so an object
    resting on an edge feels a righting torque.
    """
    cfg = state.config
    model = state.hand_model
    shape = state.shape
    nf = model.finger_count
    n_sub = state.substeps
    h = cfg.dt / n_sub
    r_tip = model.fingertip_radius

    act = SimAction.create(action.delta_palm, action.target_joints, cfg.max_pos_delta, cfg.max_rot_delta)
    if act.target_joints.size != model.joint_count:
        raise ValueError(f"expected {model.joint_count} joint targets, got {act.target_joints.size}")

    # kinematic palm; rate-limited joints that yield at their contact depth
    palm0 = state.hand.palm
    dp, dr = act.delta_palm[:3], act.delta_palm[3:]
    palm1 = Pose(quat_multiply(quat_from_rotvec(dr), palm0.quat), palm0.position + dp)
    q0 = np.asarray(state.hand.joints, dtype=float)
    max_dq = cfg.joint_speed * cfg.dt
    dq = np.clip(np.clip(act.target_joints, model.lower, model.upper) - q0, -max_dq, max_dq)
    q1 = np.clip(q0 + dq, model.lower, model.upper)
    q1 = compliant_joints(model, palm1, state.object_pose, shape, q0, q1, yield_depths(model, cfg))

    # object state
    p = state.object_pose.position.copy()
    q = state.object_pose.quat.copy()
    v = state.object_velocity[:3].copy()
    w = state.object_velocity[3:].copy()
    anchors = state.anchors.copy()
    slip = state.slip.copy()
    mass = state.mass
    inertia = state.inertia

    k_n = cfg.k_n
    c_n = 2.0 * cfg.contact_damping_ratio * math.sqrt(k_n * mass)
    k_t, c_t = k_n, c_n
    damp = cfg.damping ** (1.0 / n_sub)
    weight = cfg.gravity * mass
    gravity = np.array([0.0, 0.0, -weight])
    # the table spring carries the weight at zero depth; it lets go this far above the plane
    skin = weight / cfg.table_k
    c_table = 2.0 * cfg.table_damping_ratio * math.sqrt(cfg.table_k * mass)

    tips_prev = palm0.apply(fingertips_in_palm(q0, model))
    forces = np.zeros((nf, 3))
    points_w = np.zeros((nf, 3))
    normals_w = np.zeros((nf, 3))
    touching = np.zeros(nf, dtype=bool)
    supported = state.supported

    for k in range(1, n_sub + 1):
        frac = k / n_sub
        if k == n_sub:
            palm_pos, palm_q = palm1.position, palm1.quat
        else:
            palm_pos, palm_q = _palm_at(palm0.position, palm0.quat, dp, dr, frac)
        palm_k = Pose(palm_q, palm_pos)
        tips = palm_k.apply(fingertips_in_palm(q0 + frac * (q1 - q0), model))
        tip_vel = (tips - tips_prev) / h
        tips_prev = tips

        obj = Pose(q, p)
        rot = obj.rotation
        depth, surf, nrm = _tip_penetration(obj.apply_inverse(tips), shape, r_tip)

        total_f = gravity.copy()
        total_tau = np.zeros(3)
        forces[:] = 0.0
        touching[:] = depth > 0.0
        for i in range(nf):
            if not touching[i]:
                anchors[i] = np.nan
                continue
            n_w = rot @ nrm[i]
            s_w = obj.apply(surf[i])
            r = s_w - p
            v_rel = tip_vel[i] - (v + np.cross(w, r))
            vn = float(v_rel @ n_w)
            f_n = max(0.0, k_n * depth[i] - c_n * vn)

            if np.isnan(anchors[i, 0]):
                anchors[i] = surf[i]
            anchor_w = obj.apply(anchors[i])
            delta = s_w - anchor_w
            delta_t = delta - (delta @ n_w) * n_w
            v_t = v_rel - vn * n_w
            f_t = k_t * delta_t + c_t * v_t
            cap = cfg.mu * f_n
            f_t_norm = float(np.linalg.norm(f_t))
            if f_t_norm > cap:
                f_t *= cap / max(f_t_norm, 1e-300)
                d_norm = float(np.linalg.norm(delta_t))
                if d_norm > 1e-15:
                    # drag the anchor so the spring alone sits at the friction cap
                    keep = min(1.0, cap / (k_t * d_norm))
                    new_anchor_w = s_w - delta_t * keep
                    new_anchor = obj.apply_inverse(new_anchor_w)
                    if not supported:
                        slip[i] += float(np.linalg.norm(new_anchor - anchors[i]))
                    anchors[i] = new_anchor

            f = -f_n * n_w + f_t
            forces[i] = f
            points_w[i] = s_w
            normals_w[i] = n_w
            total_f += f
            total_tau += np.cross(r, f)

        # table: preloaded half-space penalty at the support patch
        z_low = p[2] - support_value(shape, rot.T @ _DOWN)
        supported = z_low < skin
        if supported:
            r_t = table_patch_point(shape, rot, p) - p
            v_c = v + np.cross(w, r_t)
            f_table = max(0.0, weight - cfg.table_k * z_low - c_table * v_c[2])
            total_f[2] += f_table
            total_tau += np.cross(r_t, [0.0, 0.0, f_table])
            # Coulomb friction: the impulse that stops the patch sliding, capped at table_mu * normal
            inv_i = rot @ np.diag(1.0 / inertia) @ rot.T
            u = v + h * total_f / mass + np.cross(w + h * (inv_i @ total_tau), r_t)
            u[2] = 0.0
            slide = float(np.linalg.norm(u))
            if slide > 0.0 and f_table > 0.0:
                t_hat = u / slide
                rxt = np.cross(r_t, t_hat)
                k_tt = 1.0 / mass + float(rxt @ (inv_i @ rxt))
                f_fric = -min(slide / k_tt, cfg.table_mu * f_table * h) / h * t_hat
                total_f += f_fric
                total_tau += np.cross(r_t, f_fric)

        # semi-implicit Euler
        v = v + h * total_f / mass
        tau_body = rot.T @ total_tau
        w_body = rot.T @ w + h * tau_body / inertia
        w = rot @ w_body
        p = p + h * v
        q = quat_multiply(quat_from_rotvec(h * w), q)

        v *= damp
        w *= damp

        speed = float(np.linalg.norm(v))
        if not math.isfinite(speed) or speed > cfg.divergence_speed:
            raise SimulationDivergedError(
                f"object speed {speed:.3g} m/s exceeds {cfg.divergence_speed} m/s",
                speed=speed, step=state.time_step_index,
            )

    contacts = tuple(
        ContactRecord(True, points_w[i].copy(), normals_w[i].copy(), forces[i].copy()) if touching[i]
        else ContactRecord()
        for i in range(nf)
    )
    onset = state.contact_onset
    if onset < 0 and any(c.magnitude > cfg.contact_force_bit for c in contacts):
        onset = state.time_step_index + 1

    nxt = replace(
        state,
        hand=HandConfig.make(palm1, q1, model),
        object_pose=Pose(q, p),
        object_velocity=np.concatenate([v, w]),
        contacts=contacts,
        time_step_index=state.time_step_index + 1,
        slip=slip,
        anchors=anchors,
        supported=bool(supported),
        contact_onset=onset,
    )
    if not nxt.success_latched and check_success(nxt):
        logger.debug("success latched at step %d", nxt.time_step_index)
        nxt = replace(nxt, success_latched=True)
    return nxt


# ---------------------------------------------------------------------
# Success / observations
# ---------------------------------------------------------------------
def lift_threshold(state: SimState) -> float:
    cfg = state.config
    return max(cfg.lift_threshold, state.rest_z + cfg.min_lift)


def check_success(state: SimState) -> bool:
    """Lifted above the threshold, held by >= 2 fingers, slip within tolerance."""
    return bool(
        state.object_pose.position[2] >= lift_threshold(state)
        and state.contact_count >= 2
        and state.slip_metric <= state.config.slip_tolerance
    )


def privileged_dim(finger_count: int) -> int:
    # 3F world tips + 3F palm tips + 3F force directions + 2F joints + F bits
    return 14 + 12 * finger_count


def privileged_obs(state: SimState, hand: Optional[HandModel] = None) -> np.ndarray:
    """
    palm pose world (7) | object pose in palm frame (7) | fingertips world (3F)
    | fingertips palm frame (3F) | joints (2F) | contact bits (F)
    | unit contact-force directions in the palm frame (3F)
    """
    model = hand or state.hand_model
    palm = state.hand.palm
    bit = state.config.contact_force_bit
    tips_palm = fingertips_in_palm(state.hand.joints, model)
    tips_world = palm.apply(tips_palm)
    rel = palm.inverse().compose(state.object_pose)

    bits = np.zeros(model.finger_count)
    dirs = np.zeros((model.finger_count, 3))
    for i, c in enumerate(state.contacts):
        mag = c.magnitude
        if mag > bit:
            bits[i] = 1.0
        if c.in_contact and mag > 0.0:
            dirs[i] = palm.rotation.T @ (c.force / mag)
    return np.concatenate([
        palm.as_vector(),
        rel.as_vector(),
        tips_world.ravel(),
        tips_palm.ravel(),
        np.asarray(state.hand.joints, dtype=float),
        bits,
        dirs.ravel(),
    ])


def tip_depths(state: SimState) -> np.ndarray:
    """Per-finger fingertip penetration into the object, metres; negative or -inf when clear."""
    model = state.hand_model
    tips = state.hand.palm.apply(fingertips_in_palm(state.hand.joints, model))
    depth, _, _ = _tip_penetration(state.object_pose.apply_inverse(tips), state.shape, model.fingertip_radius)
    return depth


def kinetic_energy(state: SimState) -> float:
    v = state.object_velocity[:3]
    w_body = state.object_pose.rotation.T @ state.object_velocity[3:]
    return float(0.5 * state.mass * (v @ v) + 0.5 * np.sum(state.inertia * w_body * w_body))


__all__ = [
    "SimConfig",
    "ContactRecord",
    "SimAction",
    "SimState",
    "reset",
    "place_hand",
    "step",
    "check_success",
    "lift_threshold",
    "privileged_obs",
    "privileged_dim",
    "kinetic_energy",
    "tip_depths",
    "substep_count",
    "compliant_joints",
    "yield_depths",
    "table_patch_point",
    "home_hand",
]
