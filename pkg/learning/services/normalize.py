# learning/services/normalize.py
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VAR_FLOOR = 1e-6
CLIP = 10.0


@dataclass(eq=False)
class RunningNorm:
    """
    Per-dimension running mean/variance (parallel Welford merge).
    Once frozen, `update` is a no-op so data generation sees fixed statistics.
    """
    mean: np.ndarray
    var: np.ndarray
    count: float = 0.0
    frozen: bool = False

    @classmethod
    def create(cls, dim: int) -> "RunningNorm":
        return cls(np.zeros(int(dim)), np.ones(int(dim)), 0.0)

    @classmethod
    def fit(cls, data) -> "RunningNorm":
        """Exact batch statistics of (N, dim) data."""
        x = np.asarray(data, dtype=float)
        norm = cls.create(x.shape[1])
        norm.update(x)
        return norm

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.var, VAR_FLOOR))

    def update(self, batch) -> None:
        if self.frozen:
            return
        x = np.asarray(batch, dtype=float).reshape(-1, self.dim)
        n = x.shape[0]
        if n == 0:
            return
        b_mean = x.mean(axis=0)
        b_var = x.var(axis=0)
        if self.count == 0.0:
            self.mean, self.var, self.count = b_mean, b_var, float(n)
            return
        total = self.count + n
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_var * n + delta * delta * self.count * n / total
        self.mean = self.mean + delta * n / total
        self.var = m2 / total
        self.count = total

    def normalize(self, x, clip: float = CLIP) -> np.ndarray:
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return np.clip(z, -clip, clip) if clip else z

    def denormalize(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean

    def freeze(self) -> "RunningNorm":
        self.frozen = True
        return self

    def copy(self) -> "RunningNorm":
        return RunningNorm(self.mean.copy(), self.var.copy(), self.count, self.frozen)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(), "count": float(self.count)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunningNorm":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["var"], dtype=float),
                   float(d["count"]), frozen=True)


__all__ = ["RunningNorm", "VAR_FLOOR"]
