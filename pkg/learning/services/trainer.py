# learning/services/trainer.py
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

from core.dtos import UpdateMetrics
from core.pydantic_models import RunConfig
from core.utils.rng import STREAM_TRAIN, derive_rng
from learning.services.checkpoint import load_checkpoint, save_checkpoint
from learning.services.policy import ResidualAgent
from learning.services.ppo import PpoLearner, ppo_update
from learning.services.rollouts import agent_hand, collect_rollouts, make_contexts

logger = logging.getLogger(__name__)

METRICS_FIELDS = [
    "update",
    "mean_reward",
    "success_rate",
    "clip_fraction",
    "policy_loss",
    "value_loss",
    "entropy",
]
CHECKPOINT_NAME = "policy.ckpt"
METRICS_NAME = "metrics.csv"


@dataclass
class TrainResult:
    checkpoint: Path
    metrics_path: Path
    first_update: int
    last_update: int
    rows: List[UpdateMetrics]

    @property
    def final_success_rate(self) -> float:
        return self.rows[-1]["success_rate"] if self.rows else 0.0


def _append_metrics(path: Path, row: UpdateMetrics) -> None:
    new_file = not path.exists()
    with path.open("a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        if new_file:
            writer.writeheader()
        writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})


def read_metrics(path: Union[str, Path]) -> List[UpdateMetrics]:
    rows: List[UpdateMetrics] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            rows.append(UpdateMetrics(
                update=int(raw["update"]),
                **{k: float(raw[k]) for k in METRICS_FIELDS[1:]},
            ))
    return rows


def train_rl(
    cfg: RunConfig,
    out_dir: Union[str, Path],
    resume: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
) -> TrainResult:
    """
    PPO on the privileged observation. Each update collects
    `ppo.rollout_steps` env steps over `ppo.num_envs` episode contexts, folds
    the raw observations into the running normalization, runs the clipped
    surrogate epochs and appends one metrics.csv row.

    With `resume`, networks and normalization come from the checkpoint,
    update numbering continues after its update index and rows are appended
    to the existing metrics.csv. Optimizer moments restart from zero.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_workers = max(1, int(workers if workers is not None else cfg.workers))
    hand = agent_hand(cfg)
    ppo = cfg.ppo

    if resume is not None:
        ckpt = load_checkpoint(resume)
        agent = ResidualAgent.from_checkpoint(ckpt, hand, cfg.skill)
        agent.obs_norm.frozen = False
        start = ckpt.update + 1
        logger.info("resuming from %s at update %d", resume, start)
    else:
        agent = ResidualAgent.create(hand, ppo, cfg.skill, derive_rng(cfg.seed, STREAM_TRAIN, 0))
        start = 0
    learner = PpoLearner(agent.policy, agent.value, ppo)
    contexts = make_contexts(cfg.seed, ppo.num_envs, offset=start * ppo.num_envs)

    metrics_path = out / METRICS_NAME
    ckpt_path = out / CHECKPOINT_NAME
    if resume is None and metrics_path.exists():
        metrics_path.unlink()
    rows: List[UpdateMetrics] = []
    last = start - 1

    with ExitStack() as stack:
        executor = None
        if n_workers > 1:
            executor = stack.enter_context(ProcessPoolExecutor(max_workers=min(n_workers, ppo.num_envs)))
        for update in range(start, start + ppo.total_updates):
            t0 = time.perf_counter()
            batch, contexts = collect_rollouts(contexts, agent, ppo.rollout_steps, cfg, executor=executor)
            agent.obs_norm.update(batch.raw_obs)
            stats = ppo_update(learner, batch.ppo, derive_rng(cfg.seed, STREAM_TRAIN, update + 1))
            agent.value = learner.value

            row = UpdateMetrics(
                update=update,
                mean_reward=batch.mean_reward,
                success_rate=batch.success_rate,
                clip_fraction=stats["clip_fraction"],
                policy_loss=stats["policy_loss"],
                value_loss=stats["value_loss"],
                entropy=stats["entropy"],
            )
            _append_metrics(metrics_path, row)
            rows.append(row)
            last = update
            logger.info(
                "update %d: reward %.4f success %.3f (%d episodes, %d diverged) clip %.3f "
                "pi %.4f v %.4f H %.3f [%.1fs]",
                update, row["mean_reward"], row["success_rate"], len(batch.episode_successes),
                batch.divergences, row["clip_fraction"], row["policy_loss"], row["value_loss"],
                row["entropy"], time.perf_counter() - t0,
            )
            if (update - start + 1) % ppo.checkpoint_every == 0:
                save_checkpoint(agent.to_checkpoint(update), ckpt_path)

    agent.obs_norm.freeze()
    save_checkpoint(agent.to_checkpoint(last), ckpt_path)
    logger.info("wrote %s after update %d", ckpt_path, last)
    return TrainResult(ckpt_path, metrics_path, start, last, rows)


__all__ = ["TrainResult", "train_rl", "read_metrics", "METRICS_FIELDS", "CHECKPOINT_NAME"]
