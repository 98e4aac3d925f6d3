# learning/services/policy.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from core.enums import CheckpointKind
from core.errors import CheckpointError, ShapeMismatchError
from core.pydantic_models import PpoSection, SkillSection
from learning.services.checkpoint import Checkpoint, load_checkpoint
from learning.services.mlp import MlpParams, forward
from learning.services.normalize import RunningNorm
from sim.services.hand import HandModel
from sim.services.physics import privileged_dim
from sim.services.skill import residual_bounds

logger = logging.getLogger(__name__)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 0.0
_LOG_2PI = math.log(2.0 * math.pi)
# policy mean starts near zero residual
OUTPUT_INIT_SCALE = 0.01


@dataclass(eq=False)
class GaussianPolicy:
    """Diagonal Gaussian in normalized action units; mean from an MLP, state-independent log_std."""
    mean: MlpParams
    log_std: np.ndarray

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=float)
        if self.log_std.shape != (self.act_dim,):
            raise ShapeMismatchError(f"log_std has shape {self.log_std.shape}, policy outputs {self.act_dim}")
        self.clamp_log_std()

    @classmethod
    def create(
        cls,
        obs_dim: int,
        act_dim: int,
        hidden: Sequence[int],
        rng: np.random.Generator,
        init_log_std: float = -1.0,
    ) -> "GaussianPolicy":
        net = MlpParams.init([obs_dim, *hidden, act_dim], rng, output_scale=OUTPUT_INIT_SCALE)
        return cls(net, np.full(act_dim, float(init_log_std)))

    @property
    def obs_dim(self) -> int:
        return self.mean.sizes[0]

    @property
    def act_dim(self) -> int:
        return self.mean.sizes[-1]

    def clamp_log_std(self) -> None:
        self.log_std = np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    def mean_action(self, obs) -> np.ndarray:
        return forward(self.mean, obs)

    def sample(self, obs, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
        """One action (unclipped, normalized units) and its log-probability."""
        mu = forward(self.mean, obs)
        u = mu + np.exp(self.log_std) * rng.standard_normal(self.act_dim)
        return u, float(log_prob_from(mu, self.log_std, u))

    def log_prob(self, obs, actions) -> np.ndarray:
        return log_prob_from(forward(self.mean, obs), self.log_std, actions)

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + 0.5 * self.act_dim * (1.0 + _LOG_2PI))

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean.copy(), self.log_std.copy())


def log_prob_from(mu, log_std, actions) -> np.ndarray:
    z = (np.asarray(actions, dtype=float) - mu) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mu.shape[-1] * _LOG_2PI


def value_network(obs_dim: int, hidden: Sequence[int], rng: np.random.Generator) -> MlpParams:
    return MlpParams.init([obs_dim, *hidden, 1], rng)


@dataclass(eq=False)
class ResidualAgent:
    """
    Everything needed to act from privileged observations: policy, value
    network, observation normalization and the residual scaling.
    """
    policy: GaussianPolicy
    value: MlpParams
    obs_norm: RunningNorm
    bounds: np.ndarray

    @classmethod
    def create(
        cls,
        hand: HandModel,
        ppo: PpoSection,
        skill: SkillSection,
        rng: np.random.Generator,
    ) -> "ResidualAgent":
        obs_dim = privileged_dim(hand.finger_count)
        bounds = residual_bounds(hand, skill)
        policy = GaussianPolicy.create(obs_dim, bounds.size, ppo.hidden, rng, ppo.init_log_std)
        value = value_network(obs_dim, ppo.hidden, rng)
        return cls(policy, value, RunningNorm.create(obs_dim), bounds)

    def to_residual(self, u) -> np.ndarray:
        """Normalized action -> physical residual (clipped to [-1, 1] first)."""
        return np.clip(np.asarray(u, dtype=float), -1.0, 1.0) * self.bounds

    def act(self, obs_raw, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Physical residual; the policy mean when no RNG is given."""
        obs = self.obs_norm.normalize(obs_raw)
        if rng is None:
            return self.to_residual(self.policy.mean_action(obs))
        u, _ = self.policy.sample(obs, rng)
        return self.to_residual(u)

    def state_value(self, obs_norm) -> np.ndarray:
        return forward(self.value, obs_norm)[..., 0]

    def to_checkpoint(self, update: int) -> Checkpoint:
        return Checkpoint(CheckpointKind.RESIDUAL, int(update), [self.policy.mean, self.value],
                          self.policy.log_std.copy(), [self.obs_norm])

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, hand: HandModel, skill: SkillSection) -> "ResidualAgent":
        if ckpt.kind != CheckpointKind.RESIDUAL or len(ckpt.nets) != 2 or ckpt.log_std is None or not ckpt.norms:
            raise CheckpointError(f"expected a residual-policy checkpoint, got kind {ckpt.kind.name}")
        bounds = residual_bounds(hand, skill)
        mean, value = ckpt.nets
        if mean.sizes[0] != privileged_dim(hand.finger_count) or mean.sizes[-1] != bounds.size:
            raise CheckpointError(
                f"checkpoint network {mean.sizes} does not fit a {hand.finger_count}-finger hand")
        return cls(GaussianPolicy(mean, ckpt.log_std), value, ckpt.norms[0], bounds)


def load_residual_agent(path, hand: HandModel, skill: SkillSection) -> ResidualAgent:
    ckpt = load_checkpoint(path)
    agent = ResidualAgent.from_checkpoint(ckpt, hand, skill)
    logger.info("loaded residual policy %s (update %d)", path, ckpt.update)
    return agent


__all__ = [
    "GaussianPolicy",
    "ResidualAgent",
    "load_residual_agent",
    "log_prob_from",
    "value_network",
    "LOG_STD_MIN",
    "LOG_STD_MAX",
]
