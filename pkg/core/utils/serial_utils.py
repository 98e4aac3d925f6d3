# core/utils/serial_utils.py
from __future__ import annotations

import base64
import hashlib
import json
import math
from datetime import datetime, timezone
from typing import Any, Iterable

import numpy as np

__all__ = [
    "canonical_json",
    "sha256_hex",
    "encode_f32_b64",
    "decode_f32_b64",
    "finite_list",
    "now_iso",
]


def canonical_json(obj: Any) -> str:
    """Stable JSON text: sorted keys, no whitespace, finite floats only."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def encode_f32_b64(arr) -> str:
    """Row-major little-endian float32 block, base64 text."""
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    return base64.b64encode(a.tobytes(order="C")).decode("ascii")


def decode_f32_b64(text: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"), validate=True)
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ValueError(f"float32 block has {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def finite_list(values: Iterable[float]) -> list[float]:
    out = [float(v) for v in values]
    bad = [v for v in out if not math.isfinite(v)]
    if bad:
        raise ValueError(f"non-finite value in array: {bad[0]!r}")
    return out


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")

