# sim/services/camera.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from core.constants import DEPTH_GRID, DEPTH_SENTINEL_M, PGM_SCALE
from core.pydantic_models import CameraSection
from core.utils.rotations import look_at_quat, quat_from_rotvec, quat_multiply
from core.utils.units import deg2rad
from sim.services.geometry import Pose, ray_intersect_many
from sim.services.hand import HandModel, fingertip_positions

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CameraSpec:
    """Pinhole depth camera: optical axis +z, image x right, image y down."""
    pose: Pose
    fov: float = 0.9
    resolution: int = DEPTH_GRID

    def __post_init__(self):
        if not (0.2 < self.fov < 2.5):
            raise ValueError(f"camera fov {self.fov} outside (0.2, 2.5) rad")
        if self.resolution < 1:
            raise ValueError("camera resolution must be >= 1")

    @classmethod
    def looking_at(cls, eye, target, fov: float = 0.9, resolution: int = DEPTH_GRID) -> "CameraSpec":
        return cls(Pose(look_at_quat(eye, target), eye), fov, resolution)

    def to_dict(self) -> dict:
        return {"pose": self.pose.as_vector().tolist(), "fov": float(self.fov), "resolution": int(self.resolution)}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraSpec":
        return cls(Pose.from_vector(d["pose"]), float(d["fov"]), int(d.get("resolution", DEPTH_GRID)))

    def pixel_directions(self) -> np.ndarray:
        """(H*W, 3) unit ray directions in the camera frame, row-major."""
        n = self.resolution
        half = math.tan(self.fov / 2.0)
        centres = (np.arange(n) + 0.5) / n * 2.0 - 1.0
        v, u = np.meshgrid(centres, centres, indexing="ij")
        d = np.stack([u * half, v * half, np.ones_like(u)], axis=-1).reshape(-1, 3)
        return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ObservableState:
    depth: np.ndarray          # (R, R) float32 metres, camera z-depth
    contact_bits: np.ndarray   # (F,) int8
    proprio: np.ndarray        # palm pose 7 + joints 2F


def sample_camera(section: CameraSection, rng: np.random.Generator) -> CameraSpec:
    """Nominal pose with uniform position noise and small yaw/pitch look-at jitter."""
    eye = np.asarray(section.nominal_eye, dtype=float) + rng.uniform(-section.position_noise, section.position_noise, 3)
    base = look_at_quat(eye, section.nominal_target)
    jitter = deg2rad(section.look_jitter_deg)
    yaw, pitch = rng.uniform(-jitter, jitter, 2)
    # jitter applied in the camera frame: yaw about image y, pitch about image x
    q = quat_multiply(base, quat_multiply(quat_from_rotvec([0.0, yaw, 0.0]), quat_from_rotvec([pitch, 0.0, 0.0])))
    return CameraSpec(Pose(q, eye), section.fov)


def _sphere_hits(origin: np.ndarray, dirs: np.ndarray, centres: np.ndarray, radius: float) -> np.ndarray:
    """Nearest t >= 0 over a set of spheres, inf on miss."""
    best = np.full(dirs.shape[0], np.inf)
    for c in centres:
        oc = origin - c
        b = dirs @ oc
        cc = float(oc @ oc) - radius * radius
        disc = b * b - cc
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        t = np.where(t0 >= 0.0, t0, t1)
        t = np.where(ok & (t >= 0.0), t, np.inf)
        best = np.minimum(best, t)
    return best


def render_depth(
    camera: CameraSpec,
    shape,
    object_pose: Pose,
    fingertips: Optional[np.ndarray] = None,
    fingertip_radius: float = 0.0,
    table: bool = True,
) -> np.ndarray:
    """Camera z-depth of the nearest hit among object, fingertip spheres and the z=0 table."""
    dirs_cam = camera.pixel_directions()
    dirs = camera.pose.rotate(dirs_cam)
    origin = camera.pose.position
    n = dirs.shape[0]

    t = np.full(n, np.inf)
    if shape is not None:
        t_obj = ray_intersect_many(np.broadcast_to(origin, (n, 3)), dirs, shape, object_pose)
        t = np.where(np.isnan(t_obj), t, np.minimum(t, t_obj))
    if fingertips is not None and len(fingertips) and fingertip_radius > 0.0:
        t = np.minimum(t, _sphere_hits(origin, dirs, np.asarray(fingertips), fingertip_radius))
    if table and origin[2] > 0.0:
        with np.errstate(divide="ignore"):
            t_tab = np.where(dirs[:, 2] < 0.0, -origin[2] / dirs[:, 2], np.inf)
        t = np.minimum(t, t_tab)

    depth = t * dirs_cam[:, 2]
    depth = np.where(np.isfinite(depth) & (depth < DEPTH_SENTINEL_M), depth, DEPTH_SENTINEL_M)
    depth = np.maximum(depth, 1e-6)
    return depth.reshape(camera.resolution, camera.resolution).astype(np.float32)


def observable_obs(state, camera: Optional[CameraSpec] = None, hand: Optional[HandModel] = None) -> ObservableState:
    """Depth grid, binarized contacts and proprioception; nothing privileged."""
    cam = camera or state.camera
    model = hand or state.hand_model
    tips = fingertip_positions(state.hand, model)
    depth = render_depth(cam, state.shape, state.object_pose, tips, model.fingertip_radius)
    bit = state.config.contact_force_bit
    bits = np.array([1 if c.magnitude > bit else 0 for c in state.contacts], dtype=np.int8)
    proprio = np.concatenate([state.hand.palm.as_vector(), np.asarray(state.hand.joints, dtype=float)])
    return ObservableState(depth=depth, contact_bits=bits, proprio=proprio)


def write_pgm(depth, path: Union[str, Path]) -> Path:
    """16-bit binary PGM, depth * 10000 rounded (the 2.0 m sentinel becomes 20000)."""
    d = np.asarray(depth, dtype=float)
    if d.ndim != 2:
        raise ValueError(f"depth grid must be 2-D, got shape {d.shape}")
    h, w = d.shape
    vals = np.clip(np.rint(d * PGM_SCALE), 0, 65535).astype(">u2")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(vals.tobytes(order="C"))
    return p


__all__ = [
    "CameraSpec",
    "ObservableState",
    "sample_camera",
    "render_depth",
    "observable_obs",
    "write_pgm",
]
