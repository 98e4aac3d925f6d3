# learning/services/rollouts.py
from __future__ import annotations

import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.errors import SimulationDivergedError, UnreachableGraspError
from core.pydantic_models import RunConfig
from core.utils.rng import STREAM_POLICY, STREAM_SAMPLING, STREAM_SIM, derive_rng, derive_seed
from datagen.services.sampling import sample_params
from learning.services.policy import ResidualAgent
from learning.services.ppo import PpoBatch, gae
from learning.services.rewards import reward
from sim.services.hand import HandModel, hand_from_section
from sim.services.physics import SimState, place_hand, privileged_obs, reset, step
from sim.services.skill import ReferenceTrajectory, compose_action, episode_length, make_reference, reference_pair

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------
# Episode contexts
# ---------------------------------------------------------------------
@dataclass(eq=False)
class EpisodeContext:
    """
    One independent environment: its own sampling and policy RNG streams and
    the episode in progress. Contexts travel to worker processes and back
    between rollouts; nothing else is shared.
    """
    index: int
    seed: int
    sampling_rng: np.random.Generator
    policy_rng: np.random.Generator
    episodes_started: int = 0
    state: Optional[SimState] = None
    traj: Optional[ReferenceTrajectory] = None
    targets: Optional[np.ndarray] = None
    t: int = 0
    episode_return: float = 0.0

    @classmethod
    def create(cls, seed: int, index: int) -> "EpisodeContext":
        return cls(
            index=int(index),
            seed=int(seed),
            sampling_rng=derive_rng(seed, STREAM_SAMPLING, index),
            policy_rng=derive_rng(seed, STREAM_POLICY, index),
        )


def make_contexts(seed: int, count: int, offset: int = 0) -> List[EpisodeContext]:
    """`offset` keeps a resumed run from replaying the first run's episodes."""
    return [EpisodeContext.create(seed, offset + i) for i in range(count)]


def start_episode(ctx: EpisodeContext, cfg: RunConfig, hand: HandModel) -> None:
    """Freshly sampled (z, phi, pose); resampled while the grasp is unreachable."""
    last_error: Optional[UnreachableGraspError] = None
    for _ in range(cfg.datagen.max_resample):
        params = sample_params(cfg.sampling, ctx.sampling_rng, cfg.camera, cfg.skill)
        sim_seed = derive_seed(ctx.seed, STREAM_SIM, ctx.index * 1_000_003 + ctx.episodes_started)
        state = reset(params.shape, params.object_pose, seed=sim_seed, hand_model=hand, config=cfg.sim)
        try:
            plan, traj = make_reference(params.shape, state.object_pose, params.z, hand, cfg.skill)
        except UnreachableGraspError as e:
            last_error = e
            logger.debug("context %d: unreachable sample (%s), resampling", ctx.index, e)
            continue
        ctx.state = place_hand(state, traj.x0)
        ctx.traj = traj
        ctx.targets = plan.tip_targets
        ctx.t = 0
        ctx.episode_return = 0.0
        ctx.episodes_started += 1
        return
    raise UnreachableGraspError(
        f"context {ctx.index}: no reachable grasp in {cfg.datagen.max_resample} samples ({last_error})")


# ---------------------------------------------------------------------
# Segments
# ---------------------------------------------------------------------
@dataclass(eq=False)
class Segment:
    obs: np.ndarray           # raw privileged observations
    obs_norm: np.ndarray
    actions: np.ndarray       # normalized units
    log_probs: np.ndarray
    values: np.ndarray        # len(rewards) + 1, bootstrap last
    rewards: np.ndarray
    dones: np.ndarray
    episode_returns: List[float] = field(default_factory=list)
    episode_successes: List[bool] = field(default_factory=list)
    divergences: int = 0


def run_segment(
    ctx: EpisodeContext,
    agent: ResidualAgent,
    cfg: RunConfig,
    steps: int,
    deterministic: bool = False,
) -> Segment:
    """
    `steps` env steps of the composed controller: privileged observation,
    Gaussian residual, reference action plus residual, sim step, reward.
    Episodes end after the reference and lift-hold steps or on divergence
    (terminal, divergence penalty) and restart immediately.
    """
    hand = agent_hand(cfg)
    length = episode_length(cfg.skill)
    obs_l, obs_n_l, act_l, logp_l, val_l, rew_l, done_l = [], [], [], [], [], [], []
    seg_returns: List[float] = []
    seg_success: List[bool] = []
    divergences = 0

    for _ in range(steps):
        if ctx.state is None:
            start_episode(ctx, cfg, hand)
        state = ctx.state
        obs = privileged_obs(state)
        obs_n = agent.obs_norm.normalize(obs)
        if deterministic:
            u = agent.policy.mean_action(obs_n)
            logp = float(agent.policy.log_prob(obs_n, u))
        else:
            u, logp = agent.policy.sample(obs_n, ctx.policy_rng)
        value = float(agent.state_value(obs_n))

        ref_now, ref_next = reference_pair(ctx.traj, ctx.t, cfg.skill)
        action = compose_action(ref_now, ref_next, agent.to_residual(u), hand, cfg.skill)
        done = False
        success = False
        try:
            nxt = step(state, action)
            r = reward(state, nxt, ctx.targets, cfg.reward).total
            ctx.t += 1
            if ctx.t >= length:
                done = True
                success = nxt.success_latched
            ctx.state = nxt
        except SimulationDivergedError as e:
            logger.debug("context %d diverged at step %d: %s", ctx.index, ctx.t, e)
            r = cfg.reward.divergence_penalty
            done = True
            divergences += 1

        ctx.episode_return += r
        obs_l.append(obs)
        obs_n_l.append(obs_n)
        act_l.append(u)
        logp_l.append(logp)
        val_l.append(value)
        rew_l.append(r)
        done_l.append(done)
        if done:
            seg_returns.append(ctx.episode_return)
            seg_success.append(success)
            ctx.state = None

    if ctx.state is None:
        last_value = 0.0
    else:
        last_value = float(agent.state_value(agent.obs_norm.normalize(privileged_obs(ctx.state))))
    return Segment(
        obs=np.asarray(obs_l),
        obs_norm=np.asarray(obs_n_l),
        actions=np.asarray(act_l),
        log_probs=np.asarray(logp_l),
        values=np.asarray(val_l + [last_value]),
        rewards=np.asarray(rew_l),
        dones=np.asarray(done_l, dtype=bool),
        episode_returns=seg_returns,
        episode_successes=seg_success,
        divergences=divergences,
    )


def agent_hand(cfg: RunConfig) -> HandModel:
    return hand_from_section(cfg.hand)


def _segment_task(args) -> Tuple[Segment, EpisodeContext]:
    ctx, agent, cfg, steps, deterministic = args
    seg = run_segment(ctx, agent, cfg, steps, deterministic)
    return seg, ctx


# ---------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------
@dataclass(eq=False)
class RolloutBatch:
    ppo: PpoBatch
    raw_obs: np.ndarray
    rewards: np.ndarray
    episode_returns: List[float]
    episode_successes: List[bool]
    divergences: int

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean()) if self.rewards.size else 0.0

    @property
    def success_rate(self) -> float:
        s = self.episode_successes
        return float(np.mean(s)) if s else 0.0


def collect_rollouts(
    contexts: Sequence[EpisodeContext],
    agent: ResidualAgent,
    steps: int,
    cfg: RunConfig,
    executor: Optional[Executor] = None,
    workers: int = 1,
    deterministic: bool = False,
) -> Tuple[RolloutBatch, List[EpisodeContext]]:
    """
    Steps every context for ceil(steps / len(contexts)) env steps, in
    parallel when an executor or workers > 1 is given, then computes GAE per
    context segment. Returns the batch and the advanced contexts (in order).
    """
    if not contexts:
        raise ValueError("collect_rollouts needs at least one episode context")
    per = max(1, math.ceil(steps / len(contexts)))
    tasks = [(ctx, agent, cfg, per, deterministic) for ctx in contexts]
    if executor is not None:
        results = list(executor.map(_segment_task, tasks))
    elif workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(contexts))) as pool:
            results = list(pool.map(_segment_task, tasks))
    else:
        results = [_segment_task(t) for t in tasks]

    segments = [seg for seg, _ in results]
    advanced = [ctx for _, ctx in results]
    gamma, lam = cfg.ppo.gamma, cfg.ppo.lam
    advs, rets = [], []
    for seg in segments:
        adv, ret = gae(seg.rewards, seg.values, seg.dones, gamma, lam)
        advs.append(adv)
        rets.append(ret)

    ppo_batch = PpoBatch(
        obs=np.concatenate([s.obs_norm for s in segments]),
        actions=np.concatenate([s.actions for s in segments]),
        log_probs=np.concatenate([s.log_probs for s in segments]),
        advantages=np.concatenate(advs),
        returns=np.concatenate(rets),
    )
    batch = RolloutBatch(
        ppo=ppo_batch,
        raw_obs=np.concatenate([s.obs for s in segments]),
        rewards=np.concatenate([s.rewards for s in segments]),
        episode_returns=[r for s in segments for r in s.episode_returns],
        episode_successes=[b for s in segments for b in s.episode_successes],
        divergences=sum(s.divergences for s in segments),
    )
    return batch, advanced


__all__ = [
    "EpisodeContext",
    "Segment",
    "RolloutBatch",
    "make_contexts",
    "start_episode",
    "run_segment",
    "collect_rollouts",
]
