# core/utils/units.py
from __future__ import annotations

import math

# ---- Angle helpers ----


def deg2rad(d: float) -> float:
    return d * math.pi / 180.0


def rad2deg(r: float) -> float:
    return r * 180.0 / math.pi


def wrap_rad(r: float) -> float:
    """Wrap to [-pi, pi)."""
    return (r + math.pi) % (2.0 * math.pi) - math.pi
