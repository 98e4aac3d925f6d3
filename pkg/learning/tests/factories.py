# learning/tests/factories.py
from __future__ import annotations

from typing import Optional

import numpy as np

from core.pydantic_models import BcSection, RunConfig
from learning.services.bc import BcPolicy
from learning.services.mlp import MlpParams
from learning.services.normalize import RunningNorm
from learning.services.policy import ResidualAgent
from sim.services.hand import default_hand

DEPTH_DIM = 32 * 32
EXTRA_DIM = 19     # 4 contact bits + palm pose 7 + 8 joints
ACTION_DIM = 14


def tiny_config(**sections) -> RunConfig:
    """Small networks and batches; section overrides as dicts, e.g. ppo={"total_updates": 2}."""
    base = {
        "ppo": {"rollout_steps": 32, "num_envs": 2, "minibatch": 16, "epochs_per_update": 2,
                "hidden": [16], "total_updates": 1, "checkpoint_every": 1, "eval_episodes": 2},
        "bc": {"epochs": 5, "minibatch": 16, "encoder_units": 8, "hidden": [16]},
    }
    for name, values in sections.items():
        base[name] = {**base.get(name, {}), **values}
    return RunConfig.model_validate(base)


def small_bc_section(**overrides) -> BcSection:
    return BcSection(**{"encoder_units": 8, "hidden": [8], **overrides})


def random_samples(rng: np.random.Generator, n: int = 32):
    depth = rng.uniform(0.3, 0.6, (n, DEPTH_DIM))
    extra = np.concatenate([rng.integers(0, 2, (n, 4)).astype(float), rng.normal(0.0, 0.5, (n, 15))], axis=1)
    actions = rng.normal(0.0, 0.3, (n, ACTION_DIM))
    return depth, extra, actions


def random_bc_policy(rng: np.random.Generator, section: Optional[BcSection] = None, live_output: bool = True) -> BcPolicy:
    """Norms fitted to random data; `live_output` replaces the zero output layer with random weights."""
    depth, extra, actions = random_samples(rng, 16)
    policy = BcPolicy.create(
        RunningNorm.fit(depth).freeze(),
        RunningNorm.fit(extra).freeze(),
        RunningNorm.fit(actions).freeze(),
        section or small_bc_section(),
        rng,
    )
    if live_output:
        policy.trunk = MlpParams.init(policy.trunk.sizes, rng)
    return policy


def zero_agent(cfg: Optional[RunConfig] = None) -> ResidualAgent:
    """Residual agent whose mean is exactly zero everywhere."""
    cfg = cfg or tiny_config()
    agent = ResidualAgent.create(default_hand(), cfg.ppo, cfg.skill, np.random.default_rng(0))
    agent.policy.mean = MlpParams.zeros(agent.policy.mean.sizes)
    return agent
