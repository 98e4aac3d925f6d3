# datagen/services/generator.py
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from core.dtos import DatasetManifest
from core.enums import EpisodeOutcome
from core.pydantic_models import RunConfig
from core.utils.rng import STREAM_SAMPLING, STREAM_SIM, derive_rng, derive_seed
from core.utils.units import rad2deg
from datagen.services.dataset import Dataset, write_dataset
from datagen.services.episodes import EpisodeRecord, run_episode
from datagen.services.sampling import GRASP_AXIS_RULE, sample_params
from sim.services.hand import hand_from_section

logger = logging.getLogger(__name__)


def simulate_index(index: int, seed: int, cfg: RunConfig, agent=None) -> EpisodeRecord:
    """Episode `index` of a run: its own sampling and sim streams, so any worker can rebuild it."""
    rng = derive_rng(seed, STREAM_SAMPLING, index)
    params = sample_params(cfg.sampling, rng, cfg.camera, cfg.skill)
    return run_episode(
        params, cfg, agent,
        index=index,
        sim_seed=derive_seed(seed, STREAM_SIM, index),
        resample_rng=rng,
        hand=hand_from_section(cfg.hand),
    )


def _chunk_task(args) -> List[EpisodeRecord]:
    start, count, seed, cfg, agent = args
    return [simulate_index(i, seed, cfg, agent) for i in range(start, start + count)]


def _keep(rec: EpisodeRecord, keep_failures: bool) -> bool:
    if rec.outcome is EpisodeOutcome.SKIPPED:
        return False
    return rec.success or keep_failures


@dataclass
class GenerationResult:
    manifest: DatasetManifest
    records: List[EpisodeRecord]
    attempts: int
    skipped: int
    seconds: float

    @property
    def episodes_per_minute(self) -> float:
        return 60.0 * self.attempts / self.seconds if self.seconds > 0 else float("inf")


def generate_dataset(
    cfg: RunConfig,
    out_dir: Union[str, Path],
    n: int,
    seed: Optional[int] = None,
    workers: int = 1,
    agent=None,
    keep_failures: Optional[bool] = None,
    zero_residual: Optional[bool] = None,
    executor: Optional[Executor] = None,
) -> GenerationResult:
    """
    Stores the first `n` qualifying episodes in episode-index order.
    Indices are simulated in chunks on a process pool; chunks come back in
    submission order, so the output does not depend on the worker count.
    Stops early when the attempt budget (`datagen.max_attempts_factor` x n)
    runs out.
    """
    seed = cfg.seed if seed is None else int(seed)
    keep_failures = cfg.datagen.keep_failures if keep_failures is None else bool(keep_failures)
    zero_residual = cfg.datagen.zero_residual if zero_residual is None else bool(zero_residual)
    if n < 0:
        raise ValueError(f"episode count must be >= 0, got {n}")
    if zero_residual:
        agent = None
    elif agent is None:
        raise ValueError("a residual policy is required unless zero_residual is set")

    budget = max(n, 0) * cfg.datagen.max_attempts_factor
    chunk = cfg.datagen.chunk_size
    wave = max(1, workers) * 2
    stored: List[EpisodeRecord] = []
    attempts = 0
    skipped = 0
    t0 = time.perf_counter()

    with ExitStack() as stack:
        pool = executor
        if pool is None and workers > 1:
            pool = stack.enter_context(ProcessPoolExecutor(max_workers=workers))
        next_index = 0
        while len(stored) < n and next_index < budget:
            tasks = []
            for _ in range(wave):
                if next_index >= budget:
                    break
                count = min(chunk, budget - next_index)
                tasks.append((next_index, count, seed, cfg, agent))
                next_index += count
            results = pool.map(_chunk_task, tasks) if pool is not None else map(_chunk_task, tasks)
            for records in results:
                for rec in records:
                    if len(stored) >= n:
                        break
                    attempts += 1
                    if rec.outcome is EpisodeOutcome.SKIPPED:
                        skipped += 1
                    if _keep(rec, keep_failures):
                        stored.append(rec)
            logger.info("generated %d/%d episodes (%d attempts, %d skipped, %.1f episodes/min)",
                        len(stored), n, attempts, skipped, 60.0 * attempts / max(time.perf_counter() - t0, 1e-9))

    seconds = time.perf_counter() - t0
    if len(stored) < n:
        logger.warning("attempt budget of %d exhausted with %d/%d episodes stored", budget, len(stored), n)

    spec = {
        "sampling": cfg.sampling.model_dump(mode="json"),
        "camera": cfg.camera.model_dump(mode="json"),
        "sim": cfg.sim.model_dump(mode="json"),
        "skill": cfg.skill.model_dump(mode="json"),
        "hand": cfg.hand.model_dump(mode="json"),
        "zero_residual": zero_residual,
        "keep_failures": keep_failures,
    }
    extra = {
        "grasp_axis_rule": GRASP_AXIS_RULE,
        "attempts": attempts,
        "skipped": skipped,
        "seed": seed,
    }
    if agent is not None:
        extra["obs_norm"] = agent.obs_norm.to_dict()
    manifest = write_dataset(stored, out_dir, spec=spec, extra=extra)
    result = GenerationResult(manifest, stored, attempts, skipped, seconds)
    logger.info("dataset %s: %d stored of %d attempts in %.1fs (%.1f episodes/min)",
                out_dir, len(stored), attempts, seconds, result.episodes_per_minute)
    return result


def _range(values) -> List[float]:
    a = np.asarray(values, dtype=float)
    return [float(a.min()), float(a.max())] if a.size else []


def summarize_dataset(ds: Dataset) -> Dict[str, object]:
    """Counts, success rate, parameter ranges and mean slip of a stored dataset."""
    recs = ds.records
    n = len(recs)
    outcomes: Dict[str, int] = {}
    for r in recs:
        outcomes[r.meta["outcome"]] = outcomes.get(r.meta["outcome"], 0) + 1
    phi = np.array([r.meta["phi"] for r in recs], dtype=float).reshape(-1, 5)
    elev = [rad2deg(r.meta["z"]["elevation"]) for r in recs]
    names = ("a1", "a2", "a3", "eps1", "eps2")
    return {
        "path": str(ds.path) if ds.path else None,
        "count": n,
        "successes": sum(1 for r in recs if r.success),
        "success_rate": (sum(1 for r in recs if r.success) / n) if n else 0.0,
        "outcomes": outcomes,
        "mean_length": float(np.mean([r.length for r in recs])) if n else 0.0,
        "mean_slip": float(np.mean([r.meta["slip"] for r in recs])) if n else 0.0,
        "elevation_deg": _range(elev),
        "phi_ranges": {name: _range(phi[:, k]) for k, name in enumerate(names)},
        "distinct_phi": len({tuple(p) for p in phi.tolist()}),
        "attempts": ds.manifest.get("attempts"),
        "skipped": ds.manifest.get("skipped"),
        "format_version": ds.manifest.get("format_version"),
    }


__all__ = ["GenerationResult", "generate_dataset", "simulate_index", "summarize_dataset"]
