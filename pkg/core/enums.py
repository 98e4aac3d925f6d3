from __future__ import annotations

from enum import Enum


class GraspAxis(str, Enum):
    """Object axis along which thumb and fingers oppose each other."""
    X = "x"
    Y = "y"


class Condition(str, Enum):
    """Training-data condition of the generalization experiment."""
    NARROW = "narrow"        # one fixed shape, few episodes
    AUGMENTED = "augmented"  # full p(phi)
    MIXED = "mixed"          # union of the two


class EvalSplit(str, Enum):
    ID = "id"
    OOD = "ood"


class CheckpointKind(int, Enum):
    RESIDUAL = 1
    BC = 2


class EpisodeOutcome(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    DIVERGED = "diverged"
    SKIPPED = "skipped"


__all__ = [
    "GraspAxis",
    "Condition",
    "EvalSplit",
    "CheckpointKind",
    "EpisodeOutcome",
]
