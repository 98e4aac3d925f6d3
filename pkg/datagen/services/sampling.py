# datagen/services/sampling.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.enums import GraspAxis
from core.pydantic_models import CameraSection, SamplingSection, SkillSection
from core.utils.rotations import quat_from_rotvec
from core.utils.units import deg2rad
from sim.services.camera import CameraSpec, sample_camera
from sim.services.geometry import Pose, SuperquadricShape
from sim.services.skill import SkillParam

logger = logging.getLogger(__name__)

GRASP_AXIS_RULE = "shorter of a1/a2 opposition width (x on ties)"


@dataclass(frozen=True, eq=False)
class SampledParams:
    z: SkillParam
    shape: SuperquadricShape
    object_pose: Pose      # z is replaced by the resting height at reset
    camera: CameraSpec


def shorter_axis(shape: SuperquadricShape) -> GraspAxis:
    return GraspAxis.X if shape.a1 <= shape.a2 else GraspAxis.Y


def sample_shape(spec: SamplingSection, rng: np.random.Generator) -> SuperquadricShape:
    if spec.fixed_shape is not None:
        return SuperquadricShape.from_vector(spec.fixed_shape)
    a1, a2 = rng.uniform(*spec.a12, size=2)
    a3 = rng.uniform(*spec.a3)
    e1, e2 = rng.uniform(*spec.eps, size=2)
    return SuperquadricShape(float(a1), float(a2), float(a3), float(e1), float(e2))


def sample_params(
    spec: SamplingSection,
    rng: np.random.Generator,
    camera: Optional[CameraSection] = None,
    skill: Optional[SkillSection] = None,
) -> SampledParams:
    """
    One independent draw of (z, phi, object pose, camera). The draw order is
    fixed so a seeded generator always yields the same tuple.
    """
    cam_section = camera or CameraSection()
    standoff = (skill or SkillSection()).standoff

    lo = spec.elevation_center_deg - spec.elevation_halfwidth_deg
    hi = spec.elevation_center_deg + spec.elevation_halfwidth_deg
    elevation = float(deg2rad(rng.uniform(lo, hi)))
    elevation = min(max(elevation, 1e-6), math.pi / 2.0)
    azimuth = float(rng.uniform(*spec.azimuth))

    shape = sample_shape(spec, rng)
    yaw = float(rng.uniform(*spec.yaw))
    half = spec.workspace / 2.0
    x, y = rng.uniform(-half, half, size=2)
    cam = sample_camera(cam_section, rng)

    z = SkillParam(elevation, azimuth, shorter_axis(shape), standoff)
    pose = Pose(quat_from_rotvec([0.0, 0.0, yaw]), (float(x), float(y), 0.0))
    return SampledParams(z, shape, pose, cam)


__all__ = ["SampledParams", "sample_params", "sample_shape", "shorter_axis", "GRASP_AXIS_RULE"]
