# learning/services/ppo.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from core.errors import NonFiniteLossError, ShapeMismatchError
from core.pydantic_models import PpoSection
from learning.services.mlp import MlpParams, backward, forward
from learning.services.optim import Adam, clip_by_global_norm
from learning.services.policy import GaussianPolicy, log_prob_from

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------
# Advantages
# ---------------------------------------------------------------------
def gae(rewards, values, dones, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation over one segment.
    `values` carries one bootstrap entry past the end (len(rewards) + 1);
    dones[t] cuts the recursion after step t. Returns (advantages, returns).
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=bool)
    if v.shape != (r.size + 1,) or d.shape != r.shape:
        raise ShapeMismatchError(
            f"gae needs len(values) == len(rewards) + 1 == len(dones) + 1, got {v.size}, {r.size}, {d.size}")
    adv = np.zeros(r.size)
    running = 0.0
    for t in range(r.size - 1, -1, -1):
        keep = 0.0 if d[t] else 1.0
        delta = r[t] + gamma * v[t + 1] * keep - v[t]
        running = delta + gamma * lam * keep * running
        adv[t] = running
    return adv, adv + v[:-1]


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    a = np.asarray(adv, dtype=float)
    if a.size < 2:
        return a - a.mean() if a.size else a
    return (a - a.mean()) / (a.std() + 1e-8)


# ---------------------------------------------------------------------
# Clipped surrogate
# ---------------------------------------------------------------------
def clipped_surrogate(ratio, advantages, clip: float) -> np.ndarray:
    """Per-sample min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)."""
    rho = np.asarray(ratio, dtype=float)
    a = np.asarray(advantages, dtype=float)
    return np.minimum(rho * a, np.clip(rho, 1.0 - clip, 1.0 + clip) * a)


@dataclass(eq=False)
class PpoBatch:
    obs: np.ndarray          # (N, obs_dim), normalized
    actions: np.ndarray      # (N, act_dim), normalized units, unclipped
    log_probs: np.ndarray    # (N,)
    advantages: np.ndarray   # (N,)
    returns: np.ndarray      # (N,)

    def __post_init__(self):
        n = self.obs.shape[0]
        for name in ("actions", "log_probs", "advantages", "returns"):
            if getattr(self, name).shape[0] != n:
                raise ShapeMismatchError(f"batch field {name} has {getattr(self, name).shape[0]} rows, obs has {n}")

    @property
    def size(self) -> int:
        return int(self.obs.shape[0])


# ---------------------------------------------------------------------
# Update
# ---------------------------------------------------------------------
class PpoLearner:
    """
    Owns the optimizer state for (policy mean, log_std, value net); one Adam
    over the concatenated parameter vector.
    """

    def __init__(self, policy: GaussianPolicy, value: MlpParams, config: PpoSection):
        self.policy = policy
        self.value = value
        self.config = config
        self._n_mean = policy.mean.n_params
        self._n_std = policy.act_dim
        self.adam = Adam(self._n_mean + self._n_std + value.n_params, config.learning_rate)

    def _flat(self) -> np.ndarray:
        return np.concatenate([self.policy.mean.flat(), self.policy.log_std, self.value.flat()])

    def _assign(self, vec: np.ndarray) -> None:
        a, b = self._n_mean, self._n_mean + self._n_std
        self.policy.mean = self.policy.mean.with_flat(vec[:a])
        self.policy.log_std = vec[a:b].copy()
        self.policy.clamp_log_std()
        self.value = self.value.with_flat(vec[b:])

    def loss_and_grads(self, obs, actions, old_logp, adv, returns) -> Tuple[Dict[str, float], np.ndarray]:
        """Scalar losses of one minibatch and the gradient of the total loss (flat, same layout as params)."""
        cfg = self.config
        m = obs.shape[0]
        mu = forward(self.policy.mean, obs)
        log_std = self.policy.log_std
        logp = log_prob_from(mu, log_std, actions)
        ratio = np.exp(logp - old_logp)
        clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
        surr = clipped_surrogate(ratio, adv, cfg.clip)
        policy_loss = -float(surr.mean())
        entropy = self.policy.entropy()

        v = forward(self.value, obs)[:, 0]
        value_err = v - returns
        value_loss = float(np.mean(value_err ** 2))
        total = policy_loss + cfg.value_coeff * value_loss - cfg.entropy_coeff * entropy

        # the unclipped branch is the active one where it is the smaller term
        active = (ratio * adv <= clipped * adv).astype(float)
        coef = -(adv * ratio * active) / m
        inv_var = np.exp(-2.0 * log_std)
        diff = actions - mu
        g_mu = coef[:, None] * diff * inv_var
        g_log_std = (coef[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0) - cfg.entropy_coeff
        g_mean = backward(self.policy.mean, obs, g_mu).flat()
        g_value = backward(self.value, obs, (cfg.value_coeff * 2.0 * value_err / m)[:, None]).flat()

        stats = {
            "loss": total,
            "policy_loss": policy_loss,
            "value_loss": value_loss,
            "entropy": entropy,
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
            "mean_ratio": float(ratio.mean()),
            "approx_kl": float(np.mean(old_logp - logp)),
        }
        return stats, np.concatenate([g_mean, g_log_std, g_value])

    def update(self, batch: PpoBatch, rng: np.random.Generator) -> Dict[str, float]:
        cfg = self.config
        adv = normalize_advantages(batch.advantages)
        n = batch.size
        mb = min(cfg.minibatch, n)
        sums: Dict[str, float] = {}
        count = 0
        for epoch in range(cfg.epochs_per_update):
            order = rng.permutation(n)
            for j, start in enumerate(range(0, n, mb)):
                idx = order[start:start + mb]
                stats, grad = self.loss_and_grads(
                    batch.obs[idx], batch.actions[idx], batch.log_probs[idx], adv[idx], batch.returns[idx])
                if not (math.isfinite(stats["loss"]) and np.all(np.isfinite(grad))):
                    raise NonFiniteLossError(
                        f"non-finite PPO loss at epoch {epoch}, minibatch {j}", epoch=epoch, minibatch=j)
                grad, grad_norm = clip_by_global_norm(grad, cfg.max_grad_norm)
                self._assign(self.adam.step(self._flat(), grad))
                stats["grad_norm"] = grad_norm
                for k, val in stats.items():
                    sums[k] = sums.get(k, 0.0) + val
                count += 1
        return {k: val / max(count, 1) for k, val in sums.items()}


def ppo_update(learner: PpoLearner, batch: PpoBatch, rng: np.random.Generator) -> Dict[str, float]:
    """Epochs of shuffled minibatch steps on one rollout; returns averaged loss statistics."""
    return learner.update(batch, rng)


__all__ = [
    "gae",
    "ppo_update",
    "normalize_advantages",
    "clipped_surrogate",
    "PpoBatch",
    "PpoLearner",
]
