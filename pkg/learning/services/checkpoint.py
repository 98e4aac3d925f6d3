# learning/services/checkpoint.py
"""
Binary policy checkpoints.

Layout (all integers u32 little-endian, all floats f64 little-endian):

    b"GFPL" | version | kind | update | net count
    per net: layer count, layer sizes...
    norm count | per norm: dim
    log_std dim (0 for behavior-cloning checkpoints)
    per net: weights of every layer (row-major), then biases of every layer
    log_std
    per norm: mean, variance, count
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from core.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from core.enums import CheckpointKind
from core.errors import CheckpointError
from learning.services.mlp import MlpParams
from learning.services.normalize import RunningNorm

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Checkpoint:
    kind: CheckpointKind
    update: int
    nets: List[MlpParams]
    log_std: Optional[np.ndarray] = None
    norms: List[RunningNorm] = field(default_factory=list)


def _u32(*values: int) -> bytes:
    return struct.pack(f"<{len(values)}I", *values)


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    log_std = np.zeros(0) if ckpt.log_std is None else np.asarray(ckpt.log_std, dtype="<f8")
    parts = [CHECKPOINT_MAGIC, _u32(CHECKPOINT_VERSION, int(ckpt.kind), int(ckpt.update), len(ckpt.nets))]
    for net in ckpt.nets:
        parts.append(_u32(len(net.sizes), *net.sizes))
    parts.append(_u32(len(ckpt.norms), *[n.dim for n in ckpt.norms]))
    parts.append(_u32(log_std.size))
    for net in ckpt.nets:
        parts.append(net.flat().astype("<f8").tobytes())
    parts.append(log_std.astype("<f8").tobytes())
    for n in ckpt.norms:
        parts.append(np.concatenate([n.mean, n.var, [n.count]]).astype("<f8").tobytes())

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(b"".join(parts))
    logger.debug("wrote %s checkpoint %s (update %d)", ckpt.kind.name.lower(), p, ckpt.update)
    return p


class _Reader:
    def __init__(self, data: bytes, source: Path):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.source}: truncated checkpoint (needs {self.pos + n} bytes, "
                                  f"has {len(self.data)})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, count: int = 1) -> tuple:
        return struct.unpack(f"<{count}I", self.take(4 * count))

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise CheckpointError(f"checkpoint not found: {p}")
    r = _Reader(p.read_bytes(), p)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{p}: not a graspforge checkpoint (bad magic)")
    version, kind_raw, update, n_nets = r.u32(4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{p}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    try:
        kind = CheckpointKind(kind_raw)
    except ValueError as e:
        raise CheckpointError(f"{p}: unknown checkpoint kind {kind_raw}") from e

    net_sizes = []
    for _ in range(n_nets):
        (n_layers,) = r.u32()
        net_sizes.append(r.u32(n_layers))
    (n_norms,) = r.u32()
    norm_dims = r.u32(n_norms) if n_norms else ()
    (std_dim,) = r.u32()

    nets = []
    for k, sizes in enumerate(net_sizes):
        # behavior-cloning checkpoints store the depth encoder first; it has a tanh output
        shell = MlpParams.zeros(sizes, tanh_output=(kind == CheckpointKind.BC and k == 0 and n_nets > 1))
        nets.append(shell.with_flat(r.f64(shell.n_params)))
    log_std = r.f64(std_dim) if std_dim else None
    norms = []
    for dim in norm_dims:
        block = r.f64(2 * dim + 1)
        norms.append(RunningNorm(block[:dim].copy(), block[dim:2 * dim].copy(), float(block[-1]), frozen=True))
    if r.pos != len(r.data):
        raise CheckpointError(f"{p}: {len(r.data) - r.pos} unexpected trailing bytes")
    for net in nets:
        if not net.is_finite():
            raise CheckpointError(f"{p}: non-finite network parameters")
    return Checkpoint(kind, int(update), nets, log_std, norms)


__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint"]
