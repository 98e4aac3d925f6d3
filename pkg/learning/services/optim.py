# learning/services/optim.py
from __future__ import annotations

from typing import Tuple

import numpy as np


def clip_by_global_norm(grad: np.ndarray, max_norm: float) -> Tuple[np.ndarray, float]:
    """Rescale so the L2 norm is at most max_norm; returns (grad, norm before clipping)."""
    norm = float(np.linalg.norm(grad))
    if max_norm > 0.0 and norm > max_norm:
        return grad * (max_norm / norm), norm
    return grad, norm


class Adam:
    """Adam over one flat parameter vector (beta1 0.9, beta2 0.999, eps 1e-8)."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(int(size))
        self.v = np.zeros(int(size))
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if grad.shape != self.m.shape:
            raise ValueError(f"gradient has shape {grad.shape}, optimizer holds {self.m.shape}")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


__all__ = ["Adam", "clip_by_global_norm"]
