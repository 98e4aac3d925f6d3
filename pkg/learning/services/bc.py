# learning/services/bc.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.constants import DEPTH_GRID
from core.enums import CheckpointKind
from core.errors import CheckpointError, EmptyDatasetError, NonFiniteLossError, ShapeMismatchError
from core.pydantic_models import BcSection
from core.utils.rng import STREAM_TRAIN, derive_rng
from learning.services.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from learning.services.mlp import MlpParams, backward, forward
from learning.services.normalize import RunningNorm
from learning.services.optim import Adam

logger = logging.getLogger(__name__)

DEPTH_DIM = DEPTH_GRID * DEPTH_GRID


# ---------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------
@dataclass(eq=False)
class BcSamples:
    """Flattened (observation, action) pairs: depth (N, 1024), extra = bits + proprio, actions."""
    depth: np.ndarray
    extra: np.ndarray
    actions: np.ndarray

    @property
    def size(self) -> int:
        return int(self.actions.shape[0])

    @classmethod
    def from_records(cls, records: Iterable) -> "BcSamples":
        depth, extra, actions = [], [], []
        for rec in records:
            if rec.length == 0:
                continue
            depth.append(rec.depth.reshape(rec.length, -1).astype(float))
            extra.append(np.concatenate([rec.contacts.astype(float), rec.proprio], axis=1))
            actions.append(rec.actions)
        if not actions:
            return cls(np.zeros((0, DEPTH_DIM)), np.zeros((0, 0)), np.zeros((0, 0)))
        return cls(np.concatenate(depth), np.concatenate(extra), np.concatenate(actions))


# ---------------------------------------------------------------------
# Policy
# ---------------------------------------------------------------------
@dataclass(eq=False)
class BcPolicy:
    """
    Depth encoder (1024 -> 64, tanh) and a trunk over
    [encoded depth, contact bits, proprioception] -> action. Inputs and
    actions are normalized with frozen per-dimension statistics.
    """
    encoder: MlpParams
    trunk: MlpParams
    depth_norm: RunningNorm
    extra_norm: RunningNorm
    action_norm: RunningNorm

    def __post_init__(self):
        enc_out = self.encoder.sizes[-1]
        if self.trunk.sizes[0] != enc_out + self.extra_norm.dim:
            raise ShapeMismatchError(
                f"trunk input {self.trunk.sizes[0]} != encoder {enc_out} + extra {self.extra_norm.dim}")
        if self.encoder.sizes[0] != self.depth_norm.dim or self.trunk.sizes[-1] != self.action_norm.dim:
            raise ShapeMismatchError("normalization sizes do not match the networks")

    @classmethod
    def create(
        cls,
        depth_norm: RunningNorm,
        extra_norm: RunningNorm,
        action_norm: RunningNorm,
        section: BcSection,
        rng: np.random.Generator,
    ) -> "BcPolicy":
        encoder = MlpParams.init([depth_norm.dim, section.encoder_units], rng, tanh_output=True)
        # zero output layer: an untrained policy predicts the mean action
        trunk = MlpParams.init(
            [section.encoder_units + extra_norm.dim, *section.hidden, action_norm.dim], rng, output_scale=0.0)
        return cls(encoder, trunk, depth_norm, extra_norm, action_norm)

    @property
    def action_dim(self) -> int:
        return self.action_norm.dim

    # ---- flat parameter view -----------------------------------------

    @property
    def n_params(self) -> int:
        return self.encoder.n_params + self.trunk.n_params

    def flat(self) -> np.ndarray:
        return np.concatenate([self.encoder.flat(), self.trunk.flat()])

    def with_flat(self, vec) -> "BcPolicy":
        vec = np.asarray(vec, dtype=float)
        k = self.encoder.n_params
        return BcPolicy(self.encoder.with_flat(vec[:k]), self.trunk.with_flat(vec[k:]),
                        self.depth_norm, self.extra_norm, self.action_norm)

    # ---- inference ---------------------------------------------------

    def normalize_inputs(self, depth, extra) -> Tuple[np.ndarray, np.ndarray]:
        d = np.asarray(depth, dtype=float).reshape(-1, self.depth_norm.dim)
        e = np.asarray(extra, dtype=float).reshape(-1, self.extra_norm.dim)
        return self.depth_norm.normalize(d), self.extra_norm.normalize(e)

    def forward_normalized(self, depth_n, extra_n) -> np.ndarray:
        h = forward(self.encoder, depth_n)
        return forward(self.trunk, np.concatenate([h, extra_n], axis=1))

    def predict_batch(self, depth, extra) -> np.ndarray:
        d, e = self.normalize_inputs(depth, extra)
        return self.action_norm.denormalize(self.forward_normalized(d, e))

    def predict(self, obs) -> np.ndarray:
        """Action vector for one ObservableState."""
        extra = np.concatenate([np.asarray(obs.contact_bits, dtype=float), np.asarray(obs.proprio, dtype=float)])
        return self.predict_batch(obs.depth.reshape(1, -1), extra[None, :])[0]

    # ---- checkpoints -------------------------------------------------

    def to_checkpoint(self, epochs: int) -> Checkpoint:
        return Checkpoint(CheckpointKind.BC, int(epochs), [self.encoder, self.trunk], None,
                          [self.depth_norm, self.extra_norm, self.action_norm])

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "BcPolicy":
        if ckpt.kind != CheckpointKind.BC or len(ckpt.nets) != 2 or len(ckpt.norms) != 3:
            raise CheckpointError(f"expected a behavior-cloning checkpoint, got kind {ckpt.kind.name}")
        try:
            return cls(ckpt.nets[0], ckpt.nets[1], *ckpt.norms)
        except ShapeMismatchError as e:
            raise CheckpointError(f"inconsistent behavior-cloning checkpoint: {e}") from e


def save_bc_policy(policy: BcPolicy, path: Union[str, Path], epochs: int = 0) -> Path:
    return save_checkpoint(policy.to_checkpoint(epochs), path)


def load_bc_policy(path: Union[str, Path]) -> BcPolicy:
    return BcPolicy.from_checkpoint(load_checkpoint(path))


# ---------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------
def bc_loss_and_grads(policy: BcPolicy, depth_n, extra_n, target_n) -> Tuple[float, np.ndarray]:
    """
    Mean squared error over samples and action dimensions, all in normalized
    units. Returns the loss and its gradient in `policy.flat()` layout.
    """
    depth_n = np.asarray(depth_n, dtype=float)
    extra_n = np.asarray(extra_n, dtype=float)
    target_n = np.asarray(target_n, dtype=float)
    h = forward(policy.encoder, depth_n)
    x = np.concatenate([h, extra_n], axis=1)
    y = forward(policy.trunk, x)
    if y.shape != target_n.shape:
        raise ShapeMismatchError(f"predictions {y.shape} vs targets {target_n.shape}")
    err = y - target_n
    loss = float(np.mean(err * err))

    g_y = 2.0 * err / err.size
    g_trunk = backward(policy.trunk, x, g_y)
    g_h = g_trunk.inputs[:, :policy.encoder.sizes[-1]]
    g_enc = backward(policy.encoder, depth_n, g_h)
    return loss, np.concatenate([g_enc.flat(), g_trunk.flat()])


def per_sample_loss(policy: BcPolicy, depth, extra, actions) -> np.ndarray:
    d, e = policy.normalize_inputs(depth, extra)
    err = policy.forward_normalized(d, e) - policy.action_norm.normalize(actions, clip=0)
    return np.mean(err * err, axis=1)


# ---------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------
@dataclass
class BcTrainResult:
    epoch_losses: List[float] = field(default_factory=list)
    final_loss: float = math.nan
    samples: int = 0


def train_bc(
    samples: Union[BcSamples, Sequence],
    section: Optional[BcSection] = None,
    seed: int = 0,
) -> Tuple[BcPolicy, BcTrainResult]:
    """
    Adam on the normalized-action MSE. `samples` is a BcSamples or a
    sequence of episode records. Deterministic for a fixed seed. Each
    recorded epoch loss is the mean minibatch loss before that minibatch's
    step, so a full-batch run records the loss at the start of every epoch.
    """
    cfg = section or BcSection()
    data = samples if isinstance(samples, BcSamples) else BcSamples.from_records(samples)
    n = data.size
    if n == 0:
        raise EmptyDatasetError("behavior cloning needs at least one (observation, action) pair")

    rng = derive_rng(seed, STREAM_TRAIN, 0)
    policy = BcPolicy.create(
        RunningNorm.fit(data.depth).freeze(),
        RunningNorm.fit(data.extra).freeze(),
        RunningNorm.fit(data.actions).freeze(),
        cfg, rng,
    )
    depth_n, extra_n = policy.normalize_inputs(data.depth, data.extra)
    target_n = policy.action_norm.normalize(data.actions, clip=0)

    adam = Adam(policy.n_params, cfg.lr)
    mb = min(cfg.minibatch, n)
    result = BcTrainResult(samples=n)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for j, start in enumerate(range(0, n, mb)):
            idx = order[start:start + mb]
            loss, grad = bc_loss_and_grads(policy, depth_n[idx], extra_n[idx], target_n[idx])
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise NonFiniteLossError(f"non-finite BC loss at epoch {epoch}, minibatch {j}",
                                         epoch=epoch, minibatch=j)
            policy = policy.with_flat(adam.step(policy.flat(), grad))
            total += loss
            batches += 1
        result.epoch_losses.append(total / batches)
        logger.debug("bc epoch %d: loss %.6f", epoch, result.epoch_losses[-1])

    result.final_loss = dataset_loss(policy, depth_n, extra_n, target_n)
    logger.info("trained BC policy on %d pairs: final loss %.6f", n, result.final_loss)
    return policy, result


def dataset_loss(policy: BcPolicy, depth_n, extra_n, target_n, chunk: int = 4096) -> float:
    total = 0.0
    n = depth_n.shape[0]
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        err = policy.forward_normalized(depth_n[sl], extra_n[sl]) - target_n[sl]
        total += float(np.sum(err * err))
    return total / (n * target_n.shape[1]) if n else 0.0


__all__ = [
    "BcSamples",
    "BcPolicy",
    "BcTrainResult",
    "bc_loss_and_grads",
    "per_sample_loss",
    "train_bc",
    "dataset_loss",
    "save_bc_policy",
    "load_bc_policy",
]
