# datagen/services/dataset.py
"""
On-disk dataset: a directory holding

    manifest.json    counts, format version, build id, sampling spec,
                     sha256 of episodes.jsonl
    episodes.jsonl   one episode per line: {"meta": {...}, "steps": [...]}

Each step stores the depth grid as base64 little-endian float32 (row-major),
contact bits, proprioception and the observable action as JSON numbers.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np

from core.constants import DATASET_FORMAT_VERSION, DEPTH_GRID
from core.dtos import DatasetManifest, StepRecord
from core.errors import (
    DatasetError,
    DatasetHashError,
    DatasetTruncatedError,
    DatasetVersionError,
    MissingDatasetError,
)
from core.services.configuration_service import package_build_id
from core.utils.serial_utils import canonical_json, decode_f32_b64, encode_f32_b64, finite_list, sha256_hex
from datagen.services.episodes import EpisodeRecord

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
EPISODES_NAME = "episodes.jsonl"


@dataclass(eq=False)
class Dataset:
    manifest: DatasetManifest
    records: List[EpisodeRecord]
    path: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.records)


def _encode_record(rec: EpisodeRecord) -> str:
    steps: List[StepRecord] = []
    for t in range(rec.length):
        steps.append(StepRecord(
            depth=encode_f32_b64(rec.depth[t]),
            contacts=[int(b) for b in rec.contacts[t]],
            proprio=finite_list(rec.proprio[t]),
            action=finite_list(rec.actions[t]),
        ))
    return canonical_json({"meta": dict(rec.meta), "steps": steps})


def _decode_record(obj: Dict[str, Any]) -> EpisodeRecord:
    steps = obj["steps"]
    rec = EpisodeRecord(meta=obj["meta"])
    if steps:
        rec.depth = np.stack([decode_f32_b64(s["depth"], (DEPTH_GRID, DEPTH_GRID)) for s in steps])
        rec.contacts = np.array([s["contacts"] for s in steps], dtype=np.int8)
        rec.proprio = np.array([s["proprio"] for s in steps], dtype=float)
        rec.actions = np.array([s["action"] for s in steps], dtype=float)
    return rec


def write_dataset(
    records: Iterable[EpisodeRecord],
    path: Union[str, Path],
    spec: Optional[dict] = None,
    extra: Optional[dict] = None,
) -> DatasetManifest:
    """
    Writes episodes.jsonl then manifest.json. Output bytes depend only on
    the records, `spec` and `extra`, so equal inputs give equal files.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    recs = list(records)
    lines = "".join(_encode_record(r) + "\n" for r in recs).encode("utf-8")
    (out / EPISODES_NAME).write_bytes(lines)

    spec_payload = spec or {}
    manifest = DatasetManifest(
        format_version=DATASET_FORMAT_VERSION,
        count=len(recs),
        successes=sum(1 for r in recs if r.success),
        content_sha256=sha256_hex(lines),
        build_id=package_build_id(),
        spec=spec_payload,
        spec_sha256=sha256_hex(canonical_json(spec_payload)),
    )
    manifest.update(extra or {})
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote dataset %s (%d episodes, %d successes)", out, manifest["count"], manifest["successes"])
    return manifest


def read_manifest(path: Union[str, Path]) -> DatasetManifest:
    p = Path(path)
    mpath = p / MANIFEST_NAME
    if not mpath.is_file():
        raise MissingDatasetError(f"no dataset at {p} ({MANIFEST_NAME} missing)")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetTruncatedError(f"{mpath}: unreadable manifest ({e})") from e
    version = manifest.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise DatasetVersionError(f"{p}: format_version {version}, expected {DATASET_FORMAT_VERSION}")
    return manifest


def read_dataset(path: Union[str, Path]) -> Dataset:
    """Checks version, then completeness, then the content hash."""
    p = Path(path)
    manifest = read_manifest(p)
    epath = p / EPISODES_NAME
    if not epath.is_file():
        raise DatasetTruncatedError(f"{p}: {EPISODES_NAME} missing")
    data = epath.read_bytes()

    expected = int(manifest.get("count", -1))
    text = data.decode("utf-8", errors="replace")
    lines = text.split("\n")
    complete = text.endswith("\n") or not text
    body = lines[:-1] if complete else lines
    if not complete or len(body) != expected:
        raise DatasetTruncatedError(f"{epath}: {len(body)} lines (complete={complete}), manifest says {expected}")
    records = []
    for i, line in enumerate(body):
        try:
            records.append(_decode_record(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise DatasetTruncatedError(f"{epath}: line {i + 1} is not a complete episode ({e})") from e

    digest = sha256_hex(data)
    if digest != manifest.get("content_sha256"):
        raise DatasetHashError(f"{epath}: sha256 {digest[:12]}... does not match the manifest")
    logger.debug("read dataset %s (%d episodes)", p, len(records))
    return Dataset(manifest, records, p)


def read_datasets(paths: Iterable[Union[str, Path]]) -> List[Dataset]:
    out = []
    for p in paths:
        try:
            out.append(read_dataset(p))
        except DatasetError:
            logger.error("failed to read dataset %s", p)
            raise
    return out


__all__ = [
    "Dataset",
    "write_dataset",
    "read_dataset",
    "read_datasets",
    "read_manifest",
    "MANIFEST_NAME",
    "EPISODES_NAME",
]
