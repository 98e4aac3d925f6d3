# core/errors.py
from __future__ import annotations


class GraspforgeError(Exception):
    """Base class for every error raised by graspforge services."""


# ---- geometry / hand / skill ----

class InvalidShapeError(GraspforgeError, ValueError):
    pass


class DegenerateGradientError(GraspforgeError, ArithmeticError):
    """Implicit-function gradient vanished (on-axis singular point)."""


class UnreachableGraspError(GraspforgeError):
    """Grasp synthesis failed: object too wide or IK residual above tolerance."""

    def __init__(self, message: str, *, residual_m: float | None = None):
        super().__init__(message)
        self.residual_m = residual_m


class TrajectoryIndexError(GraspforgeError, IndexError):
    pass


# ---- simulation ----

class SimulationDivergedError(GraspforgeError):
    def __init__(self, message: str, *, speed: float, step: int):
        super().__init__(message)
        self.speed = speed
        self.step = step


# ---- learning ----

class ShapeMismatchError(GraspforgeError, ValueError):
    pass


class NonFiniteLossError(GraspforgeError, FloatingPointError):
    def __init__(self, message: str, *, epoch: int, minibatch: int):
        super().__init__(message)
        self.epoch = epoch
        self.minibatch = minibatch


class CheckpointError(GraspforgeError):
    pass


class EmptyDatasetError(GraspforgeError, ValueError):
    pass


class MissingDatasetError(GraspforgeError, FileNotFoundError):
    pass


# ---- datasets ----

class DatasetError(GraspforgeError):
    pass


class DatasetVersionError(DatasetError):
    pass


class DatasetHashError(DatasetError):
    pass


class DatasetTruncatedError(DatasetError):
    pass


# ---- configuration ----

class ConfigError(GraspforgeError, ValueError):
    pass


__all__ = [
    "GraspforgeError",
    "InvalidShapeError",
    "DegenerateGradientError",
    "UnreachableGraspError",
    "TrajectoryIndexError",
    "SimulationDivergedError",
    "ShapeMismatchError",
    "NonFiniteLossError",
    "CheckpointError",
    "EmptyDatasetError",
    "MissingDatasetError",
    "DatasetError",
    "DatasetVersionError",
    "DatasetHashError",
    "DatasetTruncatedError",
    "ConfigError",
]
