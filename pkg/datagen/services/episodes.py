# datagen/services/episodes.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from core.constants import DEPTH_GRID
from core.dtos import EpisodeMeta
from core.enums import EpisodeOutcome
from core.errors import SimulationDivergedError, UnreachableGraspError
from core.pydantic_models import RunConfig
from core.utils.serial_utils import finite_list
from datagen.services.sampling import SampledParams, sample_params
from sim.services.camera import CameraSpec, ObservableState, observable_obs
from sim.services.geometry import Pose, SuperquadricShape
from sim.services.hand import HandConfig, HandModel, hand_from_section
from sim.services.physics import SimAction, SimState, place_hand, privileged_obs, reset, step
from sim.services.skill import compose_action, episode_length, make_reference, reference_pair

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------
# Record
# ---------------------------------------------------------------------
@dataclass(eq=False)
class EpisodeRecord:
    """
    Provenance plus the observable (state, action) pairs of one episode.
    Skip records (no reachable grasp) carry meta only.
    """
    meta: EpisodeMeta
    depth: np.ndarray = field(default_factory=lambda: np.zeros((0, DEPTH_GRID, DEPTH_GRID), np.float32))
    contacts: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.int8))
    proprio: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    actions: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def length(self) -> int:
        return int(self.actions.shape[0])

    @property
    def success(self) -> bool:
        return bool(self.meta["success"])

    @property
    def outcome(self) -> EpisodeOutcome:
        return EpisodeOutcome(self.meta["outcome"])

    @property
    def phi(self) -> Tuple[float, ...]:
        return tuple(self.meta["phi"])

    def observation(self, t: int) -> ObservableState:
        return ObservableState(self.depth[t], self.contacts[t], self.proprio[t])


def project(state: SimState, action: SimAction) -> Tuple[ObservableState, np.ndarray]:
    """Observable state and the observable action (palm delta as commanded, absolute joint targets)."""
    return observable_obs(state), action.as_vector()


def _skip_record(params: SampledParams, index: int, sim_seed: int, tries: int, reason: str) -> EpisodeRecord:
    meta = EpisodeMeta(
        index=int(index),
        seed=int(sim_seed),
        z=params.z.to_dict(),
        phi=finite_list(params.shape.as_vector()),
        object_pose=finite_list(params.object_pose.as_vector()),
        camera=params.camera.to_dict(),
        success=False,
        slip=0.0,
        length=0,
        outcome=EpisodeOutcome.SKIPPED.value,
        reason=reason,
        resamples=tries,
    )
    return EpisodeRecord(meta)


# ---------------------------------------------------------------------
# Episode
# ---------------------------------------------------------------------
def run_episode(
    params: SampledParams,
    cfg: RunConfig,
    agent=None,
    *,
    index: int = 0,
    sim_seed: int = 0,
    resample_rng: Optional[np.random.Generator] = None,
    hand: Optional[HandModel] = None,
) -> EpisodeRecord:
    """
    reset -> place the hand at the pre-grasp pose -> T composed steps -> the
    lift-hold steps. `agent` is a ResidualAgent acting on the privileged
    observation (policy mean); None runs the zero-residual reference.

    An unreachable grasp is resampled from `resample_rng` up to
    `datagen.max_resample` times in total, then a skip record is returned.
    """
    model = hand or hand_from_section(cfg.hand)
    tries = 0
    while True:
        tries += 1
        state = reset(params.shape, params.object_pose, camera=params.camera, seed=sim_seed,
                      hand_model=model, config=cfg.sim)
        try:
            _, traj = make_reference(params.shape, state.object_pose, params.z, model, cfg.skill)
            break
        except UnreachableGraspError as e:
            if resample_rng is None or tries >= cfg.datagen.max_resample:
                logger.debug("episode %d skipped after %d tries: %s", index, tries, e)
                return _skip_record(params, index, sim_seed, tries - 1, f"unreachable: {e}")
            params = sample_params(cfg.sampling, resample_rng, cfg.camera, cfg.skill)

    state = place_hand(state, traj.x0)
    initial_hand = state.hand.as_vector()
    rest_pose = state.object_pose
    zero = np.zeros(6 + model.joint_count)

    depth, bits, proprio, actions = [], [], [], []
    outcome = EpisodeOutcome.FAILURE
    reason = None
    for t in range(episode_length(cfg.skill)):
        residual = zero if agent is None else agent.act(privileged_obs(state))
        ref_now, ref_next = reference_pair(traj, t, cfg.skill)
        action = compose_action(ref_now, ref_next, residual, model, cfg.skill)
        obs, a = project(state, action)
        depth.append(obs.depth)
        bits.append(obs.contact_bits)
        proprio.append(obs.proprio)
        actions.append(a)
        try:
            state = step(state, action)
        except SimulationDivergedError as e:
            outcome = EpisodeOutcome.DIVERGED
            reason = f"diverged: {e}"
            break

    success = outcome is not EpisodeOutcome.DIVERGED and state.success_latched
    if success:
        outcome = EpisodeOutcome.SUCCESS
    meta = EpisodeMeta(
        index=int(index),
        seed=int(sim_seed),
        z=params.z.to_dict(),
        phi=finite_list(params.shape.as_vector()),
        object_pose=finite_list(rest_pose.as_vector()),
        camera=params.camera.to_dict(),
        success=bool(success),
        slip=float(state.slip_metric),
        length=len(actions),
        outcome=outcome.value,
        initial_hand=finite_list(initial_hand),
        final_object_pose=finite_list(state.object_pose.as_vector()),
        resamples=tries - 1,
    )
    if reason:
        meta["reason"] = reason
    logger.debug("episode %d: %s (%d steps, slip %.4f)", index, outcome.value, len(actions), meta["slip"])
    return EpisodeRecord(
        meta=meta,
        depth=np.asarray(depth, dtype=np.float32),
        contacts=np.asarray(bits, dtype=np.int8),
        proprio=np.asarray(proprio, dtype=float),
        actions=np.asarray(actions, dtype=float),
    )


# ---------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ReplayResult:
    final_object_pose: Pose
    success: bool
    diverged: bool
    state: SimState


def replay_episode(record: EpisodeRecord, cfg: RunConfig, hand: Optional[HandModel] = None) -> ReplayResult:
    """Open-loop replay of the recorded actions in a sim rebuilt from the record's provenance."""
    if "initial_hand" not in record.meta:
        raise ValueError(f"episode {record.meta['index']} has no initial hand configuration to replay from")
    model = hand or hand_from_section(cfg.hand)
    state = reset(
        SuperquadricShape.from_vector(record.meta["phi"]),
        Pose.from_vector(record.meta["object_pose"]),
        camera=CameraSpec.from_dict(record.meta["camera"]),
        seed=record.meta["seed"],
        hand_model=model,
        config=cfg.sim,
    )
    state = place_hand(state, HandConfig.from_vector(record.meta["initial_hand"], model))
    n_palm = 6
    for a in record.actions:
        action = SimAction(delta_palm=np.array(a[:n_palm], dtype=float), target_joints=np.array(a[n_palm:], dtype=float))
        try:
            state = step(state, action)
        except SimulationDivergedError:
            return ReplayResult(state.object_pose, False, True, state)
    return ReplayResult(state.object_pose, state.success_latched, False, state)


__all__ = ["EpisodeRecord", "ReplayResult", "project", "run_episode", "replay_episode"]
