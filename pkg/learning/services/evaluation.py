# learning/services/evaluation.py
"""
Closed-loop evaluation of behavior-cloning policies. The policy sees only
ObservableState (depth, contact bits, proprioception); scene setup uses the
shape to place the object and pick a start pose, never to inform actions.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from core.dtos import SuccessRow
from core.enums import EvalSplit
from core.errors import ConfigError, SimulationDivergedError, UnreachableGraspError
from core.pydantic_models import RunConfig
from core.utils.rng import STREAM_EVAL, STREAM_SIM, derive_rng, derive_seed
from datagen.services.sampling import sample_params
from learning.services.bc import BcPolicy
from sim.services.camera import observable_obs
from sim.services.geometry import SuperquadricShape
from sim.services.hand import HandModel, clamp_to_limits, hand_from_section
from sim.services.physics import SimAction, SimState, place_hand, reset, step
from sim.services.skill import approach_start, episode_length, make_reference

logger = logging.getLogger(__name__)

# trials of one shape never share a stream index with another shape
_TRIAL_STRIDE = 10_000


@dataclass(frozen=True)
class EvalShape:
    phi_id: str
    phi: Tuple[float, float, float, float, float]
    split: EvalSplit = EvalSplit.OOD

    @property
    def shape(self) -> SuperquadricShape:
        return SuperquadricShape.from_vector(self.phi)

    def to_dict(self) -> dict:
        return {"phi_id": self.phi_id, "phi": list(self.phi), "split": self.split.value}


def load_eval_shapes(path: Union[str, Path]) -> List[EvalShape]:
    """
    JSON list of either {"phi_id", "phi", "split"} objects or bare
    5-vectors (named phi_00, phi_01, ... and treated as OOD).
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"shapes file not found: {p}")
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"shapes file {p} is not valid JSON: {e}") from e
    if not isinstance(payload, list) or not payload:
        raise ConfigError(f"shapes file {p} must hold a non-empty JSON list")
    shapes = []
    for i, item in enumerate(payload):
        if isinstance(item, dict):
            phi = item.get("phi")
            name = str(item.get("phi_id", f"phi_{i:02d}"))
            split = EvalSplit(item.get("split", EvalSplit.OOD.value))
        else:
            phi, name, split = item, f"phi_{i:02d}", EvalSplit.OOD
        if not isinstance(phi, (list, tuple)) or len(phi) != 5:
            raise ConfigError(f"shapes file {p}: entry {i} needs a 5-value phi")
        shapes.append(EvalShape(name, tuple(float(v) for v in phi), split))
    return shapes


# ---------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------
def trial_scene(shape: EvalShape, shape_index: int, trial: int, seed: int, cfg: RunConfig,
                hand: HandModel) -> SimState:
    """
    Object pose, camera and start pose for one trial. Only (seed, shape
    index, trial) enter the streams, so every policy meets the same scenes.
    """
    key = shape_index * _TRIAL_STRIDE + trial
    spec = cfg.sampling.model_copy(update={"fixed_shape": tuple(shape.phi)})
    params = sample_params(spec, derive_rng(seed, STREAM_EVAL, key), cfg.camera, cfg.skill)
    state = reset(params.shape, params.object_pose, camera=params.camera,
                  seed=derive_seed(seed, STREAM_SIM, key), hand_model=hand, config=cfg.sim)
    try:
        _, traj = make_reference(params.shape, state.object_pose, params.z, hand, cfg.skill)
        start = traj.x0
    except UnreachableGraspError:
        start = approach_start(params.shape, state.object_pose, params.z, hand, cfg.skill.pregrasp_open_fraction)
    return place_hand(state, start)


def run_trial(policy: BcPolicy, shape: EvalShape, shape_index: int, trial: int, seed: int,
              cfg: RunConfig) -> bool:
    hand = hand_from_section(cfg.hand)
    state = trial_scene(shape, shape_index, trial, seed, cfg, hand)
    for _ in range(episode_length(cfg.skill)):
        a = policy.predict(observable_obs(state))
        action = SimAction.create(a[:6], clamp_to_limits(a[6:], hand),
                                  cfg.sim.max_pos_delta, cfg.sim.max_rot_delta)
        try:
            state = step(state, action)
        except SimulationDivergedError:
            return False
    return state.success_latched


def _trial_task(args) -> bool:
    return run_trial(*args)


# ---------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------
@dataclass
class EvalTable:
    rows: List[SuccessRow] = field(default_factory=list)
    splits: Dict[str, EvalSplit] = field(default_factory=dict)
    outcomes: Dict[str, List[bool]] = field(default_factory=dict)

    def totals(self, split: EvalSplit) -> Tuple[int, int]:
        rows = [r for r in self.rows if self.splits[r["phi_id"]] is split]
        return sum(r["successes"] for r in rows), sum(r["trials"] for r in rows)

    def rate(self, split: EvalSplit) -> float:
        s, n = self.totals(split)
        return s / n if n else 0.0


def eval_policy(
    policy: BcPolicy,
    shapes: Sequence[EvalShape],
    trials: int,
    seed: int,
    cfg: RunConfig,
    workers: int = 1,
    executor: Optional[Executor] = None,
) -> EvalTable:
    """Success counts per shape; trials run in parallel and are reduced in trial order."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tasks = [(policy, s, i, k, seed, cfg) for i, s in enumerate(shapes) for k in range(trials)]
    with ExitStack() as stack:
        pool = executor
        if pool is None and workers > 1:
            pool = stack.enter_context(ProcessPoolExecutor(max_workers=workers))
        results = list(pool.map(_trial_task, tasks)) if pool is not None else [_trial_task(t) for t in tasks]

    table = EvalTable()
    for i, s in enumerate(shapes):
        wins = [bool(v) for v in results[i * trials:(i + 1) * trials]]
        table.rows.append(SuccessRow(phi_id=s.phi_id, successes=sum(wins), trials=trials,
                                     rate=sum(wins) / trials))
        table.splits[s.phi_id] = s.split
        table.outcomes[s.phi_id] = wins
    for split in EvalSplit:
        s, n = table.totals(split)
        if n:
            logger.info("eval %s: %d/%d", split.value.upper(), s, n)
    return table


__all__ = ["EvalShape", "EvalTable", "load_eval_shapes", "trial_scene", "run_trial", "eval_policy"]
