# learning/services/baseline.py
from __future__ import annotations

import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass
from typing import List, Optional, Tuple

from scipy.stats import binomtest

from core.enums import EpisodeOutcome
from core.pydantic_models import RunConfig
from core.utils.rng import STREAM_EVAL, STREAM_SIM, derive_rng, derive_seed
from datagen.services.episodes import run_episode
from datagen.services.sampling import sample_params
from learning.services.policy import ResidualAgent
from sim.services.hand import hand_from_section

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairedComparison:
    """Residual policy vs the zero-residual reference on the same sampled episodes."""
    episodes: int
    policy_successes: int
    baseline_successes: int
    wins: int      # policy succeeded, baseline failed
    losses: int    # baseline succeeded, policy failed
    p_value: float

    @property
    def policy_rate(self) -> float:
        return self.policy_successes / self.episodes if self.episodes else 0.0

    @property
    def baseline_rate(self) -> float:
        return self.baseline_successes / self.episodes if self.episodes else 0.0

    def significant(self, alpha: float = 0.05) -> bool:
        return self.policy_successes > self.baseline_successes and self.p_value < alpha

    def as_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "policy_successes": self.policy_successes,
            "baseline_successes": self.baseline_successes,
            "wins": self.wins,
            "losses": self.losses,
            "p_value": self.p_value,
        }


def sign_test(wins: int, losses: int) -> float:
    """One-sided binomial sign test on the discordant pairs (ties dropped)."""
    n = wins + losses
    if n == 0:
        return 1.0
    return float(binomtest(wins, n, 0.5, alternative="greater").pvalue)


def _paired_task(args) -> Tuple[bool, bool]:
    index, seed, cfg, agent = args
    hand = hand_from_section(cfg.hand)
    sim_seed = derive_seed(seed, STREAM_SIM, index)
    outcomes = []
    for actor in (agent, None):
        rng = derive_rng(seed, STREAM_EVAL, index)
        params = sample_params(cfg.sampling, rng, cfg.camera, cfg.skill)
        rec = run_episode(params, cfg, actor, index=index, sim_seed=sim_seed, resample_rng=rng, hand=hand)
        outcomes.append(rec.outcome is EpisodeOutcome.SUCCESS)
    return outcomes[0], outcomes[1]


def evaluate_residual(
    agent: ResidualAgent,
    cfg: RunConfig,
    episodes: Optional[int] = None,
    seed: Optional[int] = None,
    workers: int = 1,
    executor: Optional[Executor] = None,
) -> PairedComparison:
    """
    Runs every sampled episode twice from identical streams, once with the
    policy mean as residual and once with a zero residual, then applies the
    sign test to the discordant pairs.
    """
    n = cfg.ppo.eval_episodes if episodes is None else int(episodes)
    seed = cfg.seed if seed is None else int(seed)
    tasks = [(i, seed, cfg, agent) for i in range(n)]
    with ExitStack() as stack:
        pool = executor
        if pool is None and workers > 1:
            pool = stack.enter_context(ProcessPoolExecutor(max_workers=workers))
        pairs: List[Tuple[bool, bool]] = (
            list(pool.map(_paired_task, tasks)) if pool is not None else [_paired_task(t) for t in tasks])

    wins = sum(1 for p, b in pairs if p and not b)
    losses = sum(1 for p, b in pairs if b and not p)
    result = PairedComparison(
        episodes=n,
        policy_successes=sum(1 for p, _ in pairs if p),
        baseline_successes=sum(1 for _, b in pairs if b),
        wins=wins,
        losses=losses,
        p_value=sign_test(wins, losses),
    )
    logger.info("residual %d/%d vs baseline %d/%d (wins %d, losses %d, p=%.4g)",
                result.policy_successes, n, result.baseline_successes, n, wins, losses, result.p_value)
    return result


__all__ = ["PairedComparison", "sign_test", "evaluate_residual"]
