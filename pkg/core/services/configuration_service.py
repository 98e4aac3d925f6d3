# core/services/configuration_service.py
from __future__ import annotations

import json
import logging
import platform
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

from pydantic import ValidationError

from core.errors import ConfigError
from core.pydantic_models import RunConfig
from core.utils.serial_utils import now_iso

logger = logging.getLogger(__name__)


def _set_dotted(payload: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = payload
    for k in keys[:-1]:
        nxt = node.setdefault(k, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {dotted!r}: {k!r} is not a section")
        node = nxt
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    """
    'ppo.total_updates=10' -> ('ppo.total_updates', 10).
    Values are parsed as JSON when possible, otherwise kept as strings.
    """
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_run_config(
    path: Optional[str | Path] = None,
    overrides: Optional[Iterable[str] | Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Defaults <- JSON file <- dotted overrides. Unknown keys are rejected.
    """
    payload: Dict[str, Any] = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            payload = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {p} is not valid JSON: {e}") from e
        if not isinstance(payload, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")

    if overrides:
        items = overrides.items() if isinstance(overrides, Mapping) else (
            parse_override(o) for o in overrides)
        for key, value in items:
            _set_dotted(payload, key, value)

    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        raise ConfigError(f"invalid run config:\n{e}") from e


def default_config_payload() -> Dict[str, Any]:
    """Reference config with the built-in hand filled in."""
    from sim.services.hand import default_hand, hand_to_section

    cfg = RunConfig()
    cfg.hand = hand_to_section(default_hand())
    return cfg.model_dump(mode="json")


def package_build_id() -> str:
    """Host-independent part of the build id; the only part dataset bytes depend on."""
    from graspforge import __version__

    return f"graspforge-{__version__}"


def build_id() -> str:
    return f"{package_build_id()}/py{sys.version_info.major}.{sys.version_info.minor}/{platform.machine()}"


class RunRecorder:
    """
    Collects the provenance of one CLI run and writes run.json into the
    artifact directory when the run finishes.
    """

    def __init__(self, command: str, argv: list[str], config: RunConfig, out_dir: Path):
        self.command = command
        self.argv = list(argv)
        self.config = config
        self.out_dir = Path(out_dir)
        self.started_at = now_iso()
        self.timings: Dict[str, float] = {}
        self.extra: Dict[str, Any] = {}

    def record_timing(self, name: str, seconds: float) -> None:
        self.timings[name] = round(float(seconds), 3)

    def write(self, status: str = "ok") -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        record = {
            "command": self.command,
            "argv": self.argv,
            "seed": self.config.seed,
            "config": self.config.model_dump(mode="json"),
            "build_id": build_id(),
            "started_at": self.started_at,
            "finished_at": now_iso(),
            "status": status,
            "timings": self.timings,
            **self.extra,
        }
        path = self.out_dir / "run.json"
        path.write_text(json.dumps(record, indent=2, sort_keys=True), encoding="utf-8")
        logger.info("wrote provenance record %s", path)
        return path
