# core/utils/rng.py
from __future__ import annotations

import numpy as np

# Stream purposes keep independent draws for the same (seed, index) apart.
STREAM_SAMPLING = 1
STREAM_SIM = 2
STREAM_POLICY = 3
STREAM_TRAIN = 4
STREAM_EVAL = 5
STREAM_SHAPES = 6


def derive_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """
    Counter-based split of the master seed: the Philox key is derived from
    (seed, stream, index), so every worker can rebuild any stream on its own.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(stream), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, stream: int, index: int = 0) -> int:
    """Integer child seed, for APIs that take a plain seed."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(stream), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])
