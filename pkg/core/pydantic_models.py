from __future__ import annotations

import math
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.constants import EPS_MAX, EPS_MIN
from core.enums import Condition


class _StrictModel(BaseModel):
    """Unknown keys are rejected at every level of the run config."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


def _ordered(pair: Tuple[float, float], name: str) -> Tuple[float, float]:
    lo, hi = pair
    if not lo < hi:
        raise ValueError(f"{name}: bounds must satisfy lo < hi, got {pair}")
    return pair


# ---------------------------------------------------------------------
# hand
# ---------------------------------------------------------------------
class FingerModel(_StrictModel):
    name: str
    mount_position: Tuple[float, float, float] = Field(description="palm frame, metres")
    mount_rotvec: Tuple[float, float, float] = Field(description="palm frame rotation vector, radians")
    link_lengths: Tuple[float, float] = Field(description="proximal, distal link lengths, metres")
    joint_limits: Tuple[Tuple[float, float], Tuple[float, float]] = Field(
        description="per-joint [lo, hi] flexion limits, radians")

    @field_validator("link_lengths")
    @classmethod
    def _positive_links(cls, v):
        if min(v) <= 0.0:
            raise ValueError("link lengths must be > 0")
        return v

    @field_validator("joint_limits")
    @classmethod
    def _ordered_limits(cls, v):
        for pair in v:
            _ordered(pair, "joint_limits")
        return v


class HandSection(_StrictModel):
    fingertip_radius: float = Field(0.008, gt=0.0, description="fingertip sphere radius, metres")
    fingers: Optional[List[FingerModel]] = Field(
        None, description="explicit finger chains; null selects the built-in four-finger hand")

    @field_validator("fingers")
    @classmethod
    def _at_least_two(cls, v):
        if v is not None and len(v) < 2:
            raise ValueError("a hand needs at least two fingers")
        return v


# ---------------------------------------------------------------------
# simulator / camera
# ---------------------------------------------------------------------
class SimSection(_StrictModel):
    dt: float = Field(0.02, gt=0.0, description="control step, seconds")
    joint_speed: float = Field(2.0, gt=0.0, description="max joint speed, rad/s")
    k_n: float = Field(800.0, gt=0.0, description="fingertip penalty stiffness, N/m")
    contact_damping_ratio: float = Field(0.5, ge=0.0, description="normal/tangential damping as a fraction of critical")
    mu: float = Field(0.8, ge=0.0, description="fingertip Coulomb friction")
    table_k: float = Field(12000.0, gt=0.0, description="table half-space penalty stiffness, N/m")
    table_damping_ratio: float = Field(1.0, ge=0.0, description="table normal damping as a fraction of critical")
    table_mu: float = Field(0.8, ge=0.0, description="object-table Coulomb friction")
    yield_depth: float = Field(0.0015, gt=0.0, le=0.005,
                               description="fingertip depth at which a finger stops advancing and yields, metres")
    thumb_yield_depth: float = Field(0.0045, gt=0.0, le=0.005,
                                     description="the same for the thumb, which opposes the whole finger row, metres")
    density: float = Field(300.0, gt=0.0, description="object density, kg/m^3")
    damping: float = Field(0.95, gt=0.0, le=1.0, description="velocity retention per control step")
    gravity: float = Field(9.81, ge=0.0)
    lift_threshold: float = Field(0.10, description="object height for success, metres")
    min_lift: float = Field(0.03, ge=0.0, description="success also needs this much lift above rest, metres")
    slip_tolerance: float = Field(0.01, ge=0.0, description="max accumulated slip while lifted, metres")
    divergence_speed: float = Field(10.0, gt=0.0, description="object speed that aborts an episode, m/s")
    contact_force_bit: float = Field(0.05, ge=0.0, description="force magnitude that sets a contact bit, N")
    max_pos_delta: float = Field(0.02, gt=0.0, description="palm translation clamp per step, metres")
    max_rot_delta: float = Field(0.1, gt=0.0, description="palm rotation clamp per step, radians")
    min_substeps: int = Field(4, ge=1)
    max_substeps: int = Field(64, ge=1)
    home_position: Tuple[float, float, float] = Field((0.0, 0.0, 0.45), description="palm home, metres")


class CameraSection(_StrictModel):
    nominal_eye: Tuple[float, float, float] = Field((0.35, 0.0, 0.40))
    nominal_target: Tuple[float, float, float] = Field((0.0, 0.0, 0.05))
    fov: float = Field(0.9, gt=0.2, lt=2.5, description="vertical field of view, radians")
    position_noise: float = Field(0.03, ge=0.0, description="uniform +- per axis, metres")
    look_jitter_deg: float = Field(3.0, ge=0.0, description="uniform +- yaw/pitch jitter, degrees")


# ---------------------------------------------------------------------
# skill / reward / ppo
# ---------------------------------------------------------------------
class SkillSection(_StrictModel):
    horizon: int = Field(50, ge=2, description="reference trajectory steps T")
    standoff: float = Field(0.10, ge=0.05, le=0.25, description="pre-grasp distance, metres")
    pregrasp_open_fraction: float = Field(0.2, ge=0.0, le=1.0)
    squeeze_depth: float = Field(0.003, ge=0.0, description="commanded fingertip penetration, metres")
    ik_tolerance: float = Field(0.003, gt=0.0, description="max fingertip residual, metres")
    ik_max_iters: int = Field(200, ge=1)
    contact_spacing: float = Field(0.015, gt=0.0, description="finger contact spacing, metres")
    palm_depth_range: Tuple[float, float] = Field((0.03, 0.08), description="palm-to-contact search, metres")
    palm_depth_step: float = Field(0.0025, gt=0.0)
    lift_steps: int = Field(25, ge=1)
    lift_height: float = Field(0.15, gt=0.0, description="palm rise during lift-hold, metres")
    residual_pos: float = Field(0.01, gt=0.0, description="residual bound, metres")
    residual_rot: float = Field(0.05, gt=0.0, description="residual bound, radians")
    residual_joint: float = Field(0.1, gt=0.0, description="residual bound, radians")

    @field_validator("palm_depth_range")
    @classmethod
    def _depth_order(cls, v):
        return _ordered(v, "palm_depth_range")


class RewardSection(_StrictModel):
    w_dist: float = Field(1.0, ge=0.0)
    w_force: float = Field(0.5, ge=0.0)
    pick_bonus: float = Field(10.0, ge=0.0)
    force_band: Tuple[float, float] = Field((0.5, 5.0), description="target normal force range, N")
    divergence_penalty: float = Field(-10.0, le=0.0)

    @field_validator("force_band")
    @classmethod
    def _band_order(cls, v):
        if v[0] < 0.0:
            raise ValueError("force_band must be >= 0")
        return _ordered(v, "force_band")


class PpoSection(_StrictModel):
    gamma: float = Field(0.99, gt=0.0, le=1.0)
    lam: float = Field(0.95, gt=0.0, le=1.0)
    clip: float = Field(0.2, gt=0.0)
    epochs_per_update: int = Field(4, ge=1)
    minibatch: int = Field(256, ge=1)
    rollout_steps: int = Field(2048, ge=1, description="env steps per update, across workers")
    num_envs: int = Field(8, ge=1, description="episode contexts stepped per rollout")
    learning_rate: float = Field(3e-4, gt=0.0)
    value_coeff: float = Field(0.5, ge=0.0)
    entropy_coeff: float = Field(0.01, ge=0.0)
    max_grad_norm: float = Field(0.5, gt=0.0)
    total_updates: int = Field(100, ge=1)
    hidden: List[int] = Field([128, 128])
    init_log_std: float = Field(-1.0, ge=-5.0, le=0.0)
    checkpoint_every: int = Field(10, ge=1)
    eval_episodes: int = Field(200, ge=1, description="paired episodes for the baseline comparison")


# ---------------------------------------------------------------------
# sampling / datagen
# ---------------------------------------------------------------------
class SamplingSection(_StrictModel):
    elevation_center_deg: float = Field(80.0, gt=0.0, le=90.0)
    elevation_halfwidth_deg: float = Field(10.0, ge=0.0)
    azimuth: Tuple[float, float] = Field((0.0, 2.0 * math.pi))
    a12: Tuple[float, float] = Field((0.02, 0.05), description="a1, a2 range, metres")
    a3: Tuple[float, float] = Field((0.05, 0.10), description="a3 range, metres")
    eps: Tuple[float, float] = Field((EPS_MIN, EPS_MAX))
    yaw: Tuple[float, float] = Field((0.0, 2.0 * math.pi))
    workspace: float = Field(0.2, gt=0.0, description="square object xy workspace side, metres")
    fixed_shape: Optional[Tuple[float, float, float, float, float]] = Field(
        None, description="pin phi for every episode (narrow condition)")

    @model_validator(mode="after")
    def _bounds(self):
        for name in ("azimuth", "a12", "a3", "eps", "yaw"):
            _ordered(getattr(self, name), name)
        lo, hi = self.eps
        if lo < EPS_MIN or hi > EPS_MAX:
            raise ValueError(f"eps range must lie in [{EPS_MIN}, {EPS_MAX}]")
        return self


class DatagenSection(_StrictModel):
    keep_failures: bool = False
    zero_residual: bool = False
    max_resample: int = Field(20, ge=1, description="grasp synthesis retries before a skip")
    max_attempts_factor: int = Field(10, ge=1, description="attempt budget = factor x requested episodes")
    chunk_size: int = Field(16, ge=1, description="episodes per worker task")


# ---------------------------------------------------------------------
# behavior cloning / evaluation
# ---------------------------------------------------------------------
class BcSection(_StrictModel):
    lr: float = Field(1e-3, gt=0.0)
    epochs: int = Field(50, ge=1)
    minibatch: int = Field(128, ge=1)
    encoder_units: int = Field(64, ge=1)
    hidden: List[int] = Field([128, 128])


class EvalSection(_StrictModel):
    trials: int = Field(5, ge=1)
    ood_count: int = Field(10, ge=1)
    ood_radius: float = Field(0.3, gt=0.0, description="normalized parameter-space exclusion radius")
    phi_star: Tuple[float, float, float, float, float] = Field(
        (0.03, 0.03, 0.075, 1.0, 1.0), description="in-distribution object")


class RunConfig(_StrictModel):
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    hand: HandSection = Field(default_factory=HandSection)
    sim: SimSection = Field(default_factory=SimSection)
    camera: CameraSection = Field(default_factory=CameraSection)
    skill: SkillSection = Field(default_factory=SkillSection)
    reward: RewardSection = Field(default_factory=RewardSection)
    ppo: PpoSection = Field(default_factory=PpoSection)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    datagen: DatagenSection = Field(default_factory=DatagenSection)
    bc: BcSection = Field(default_factory=BcSection)
    eval: EvalSection = Field(default_factory=EvalSection)


class ExperimentSpecModel(_StrictModel):
    """Input of `graspforge experiment --spec`."""
    conditions: List[Condition] = Field(
        default_factory=lambda: [Condition.NARROW, Condition.AUGMENTED, Condition.MIXED])
    narrow_data: str = Field(description="dataset directory generated with a fixed phi*")
    augmented_data: str = Field(description="dataset directory generated with full p(phi)")
    phi_star: Optional[Tuple[float, float, float, float, float]] = None
    ood_shapes: Optional[List[Tuple[float, float, float, float, float]]] = None
    trials: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    config: Optional[str] = Field(None, description="run config JSON applied to every condition")


__all__ = [
    "FingerModel",
    "HandSection",
    "SimSection",
    "CameraSection",
    "SkillSection",
    "RewardSection",
    "PpoSection",
    "SamplingSection",
    "DatagenSection",
    "BcSection",
    "EvalSection",
    "RunConfig",
    "ExperimentSpecModel",
]
