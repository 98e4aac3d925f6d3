# core/dtos.py
from __future__ import annotations

from typing import List, TypedDict

try:
    # Python 3.11+
    from typing import NotRequired, Required  # type: ignore[attr-defined]
except Exception:  # Python <= 3.10
    from typing_extensions import NotRequired, Required  # type: ignore


class EpisodeMeta(TypedDict, total=False):
    """
    Per-episode provenance stored in every dataset line.
    Poses use the 7-vector encoding (px, py, pz, qw, qx, qy, qz).
    """
    # required
    index: Required[int]
    seed: Required[int]
    z: Required[dict]                  # elevation, azimuth, grasp_axis, standoff
    phi: Required[List[float]]         # a1, a2, a3, eps1, eps2
    object_pose: Required[List[float]]
    camera: Required[dict]             # pose, fov
    success: Required[bool]
    slip: Required[float]
    length: Required[int]
    outcome: Required[str]

    # optional
    reason: NotRequired[str]
    initial_hand: NotRequired[List[float]]   # palm pose 7 + joints, for replay
    final_object_pose: NotRequired[List[float]]
    resamples: NotRequired[int]


class StepRecord(TypedDict):
    depth: str                 # base64 little-endian float32, 32x32 row-major
    contacts: List[int]
    proprio: List[float]
    action: List[float]        # palm delta 6 + absolute joints


class DatasetManifest(TypedDict, total=False):
    format_version: Required[int]
    count: Required[int]
    successes: Required[int]
    content_sha256: Required[str]
    build_id: Required[str]
    spec: Required[dict]
    spec_sha256: Required[str]

    grasp_axis_rule: NotRequired[str]
    obs_norm: NotRequired[dict]
    attempts: NotRequired[int]
    skipped: NotRequired[int]
    seed: NotRequired[int]


class UpdateMetrics(TypedDict):
    """One row of metrics.csv written by the residual-policy trainer."""
    update: int
    mean_reward: float
    success_rate: float
    clip_fraction: float
    policy_loss: float
    value_loss: float
    entropy: float


class SuccessRow(TypedDict):
    phi_id: str
    successes: int
    trials: int
    rate: float


__all__ = [
    "EpisodeMeta",
    "StepRecord",
    "DatasetManifest",
    "UpdateMetrics",
    "SuccessRow",
]
