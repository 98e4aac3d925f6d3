# learning/services/mlp.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class MlpParams:
    """
    Fully connected stack: tanh on every hidden layer, linear output unless
    `tanh_output` is set. weights[k] has shape (sizes[k+1], sizes[k]).
    """
    sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    tanh_output: bool = False

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2:
            raise ShapeMismatchError("an MLP needs at least an input and an output size")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.sizes) - 1:
            raise ShapeMismatchError(f"{len(self.weights)} weight blocks for layer sizes {self.sizes}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[k + 1], self.sizes[k]) or b.shape != (self.sizes[k + 1],):
                raise ShapeMismatchError(
                    f"layer {k}: weights {w.shape}, biases {b.shape} do not match sizes {self.sizes}")

    # ---- construction ------------------------------------------------

    @classmethod
    def init(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        output_scale: float = 1.0,
        tanh_output: bool = False,
    ) -> "MlpParams":
        """Scaled-normal weights (std 1/sqrt(fan_in)), zero biases; last layer times output_scale."""
        sizes = tuple(int(s) for s in sizes)
        weights, biases = [], []
        for k in range(len(sizes) - 1):
            w = rng.standard_normal((sizes[k + 1], sizes[k])) / np.sqrt(sizes[k])
            if k == len(sizes) - 2:
                w = w * output_scale
            weights.append(w)
            biases.append(np.zeros(sizes[k + 1]))
        return cls(sizes, weights, biases, tanh_output)

    @classmethod
    def zeros(cls, sizes: Sequence[int], tanh_output: bool = False) -> "MlpParams":
        sizes = tuple(int(s) for s in sizes)
        return cls(
            sizes,
            [np.zeros((sizes[k + 1], sizes[k])) for k in range(len(sizes) - 1)],
            [np.zeros(sizes[k + 1]) for k in range(len(sizes) - 1)],
            tanh_output,
        )

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.tanh_output)

    # ---- flat views (optimizer, checkpoints) -------------------------

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        """Weights of every layer (row-major) followed by the biases of every layer."""
        return np.concatenate([w.ravel() for w in self.weights] + [b.ravel() for b in self.biases])

    def with_flat(self, vec: np.ndarray) -> "MlpParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.n_params:
            raise ShapeMismatchError(f"flat vector has {vec.size} entries, network has {self.n_params}")
        weights, biases, i = [], [], 0
        for w in self.weights:
            weights.append(vec[i:i + w.size].reshape(w.shape).copy())
            i += w.size
        for b in self.biases:
            biases.append(vec[i:i + b.size].copy())
            i += b.size
        return MlpParams(self.sizes, weights, biases, self.tanh_output)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat())))


@dataclass(eq=False)
class MlpGrads:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    inputs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights] + [b.ravel() for b in self.biases])


# ---------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------
def _as_batch(params: MlpParams, x) -> Tuple[np.ndarray, bool]:
    a = np.asarray(x, dtype=float)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != params.sizes[0]:
        raise ShapeMismatchError(f"input of shape {np.shape(x)} does not match input size {params.sizes[0]}")
    return a, single


def _activations(params: MlpParams, a: np.ndarray) -> List[np.ndarray]:
    acts = [a]
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        acts.append(np.tanh(z) if (k < last or params.tanh_output) else z)
    return acts


def forward(params: MlpParams, x) -> np.ndarray:
    """(in,) -> (out,) or (N, in) -> (N, out)."""
    a, single = _as_batch(params, x)
    out = _activations(params, a)[-1]
    return out[0] if single else out


def backward(params: MlpParams, x, output_grad) -> MlpGrads:
    """
    Exact reverse-mode gradients of sum(output_grad * forward(x)) with
    respect to every weight, bias and the input. Batched inputs sum the
    per-sample parameter gradients.
    """
    a, single = _as_batch(params, x)
    g = np.asarray(output_grad, dtype=float)
    if single:
        g = g[None, :]
    if g.shape != (a.shape[0], params.sizes[-1]):
        raise ShapeMismatchError(f"output gradient of shape {np.shape(output_grad)} does not match "
                                 f"output size {params.sizes[-1]}")

    acts = _activations(params, a)
    last = len(params.weights) - 1
    d_w: List[Optional[np.ndarray]] = [None] * len(params.weights)
    d_b: List[Optional[np.ndarray]] = [None] * len(params.weights)
    delta = g
    for k in range(last, -1, -1):
        if k < last or params.tanh_output:
            delta = delta * (1.0 - acts[k + 1] ** 2)
        d_w[k] = delta.T @ acts[k]
        d_b[k] = delta.sum(axis=0)
        delta = delta @ params.weights[k]
    return MlpGrads(list(d_w), list(d_b), delta[0] if single else delta)


__all__ = ["MlpParams", "MlpGrads", "forward", "backward"]
