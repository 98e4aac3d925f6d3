# core/management/base.py
from __future__ import annotations

import logging
import sys
import time
from pathlib import Path
from typing import Any, Optional

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from pydantic import ValidationError

from core.errors import GraspforgeError
from core.pydantic_models import RunConfig
from core.services.configuration_service import RunRecorder, load_run_config

logger = logging.getLogger(__name__)


class GraspforgeCommand(BaseCommand):
    """
    Shared plumbing for every graspforge subcommand: --config/--set/--seed/
    --workers parsing, RunConfig loading, error mapping to exit codes and the
    run.json provenance record.

    Subclasses implement `add_command_arguments`, `artifact_dir` and `run`.
    """

    requires_system_checks: list = []
    # commands that never touch a run config (config --emit-default) turn this off
    uses_run_config = True
    # set by graspforge.cli.main so run.json records the argv it was given
    invocation_argv: Optional[list[str]] = None

    def add_arguments(self, parser):
        if self.uses_run_config:
            parser.add_argument("--config", help="run config JSON file (defaults apply to missing keys)")
            parser.add_argument(
                "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                help="dotted override, e.g. --set ppo.total_updates=10 (repeatable)",
            )
            parser.add_argument("--seed", type=int, help="master seed (overrides config seed)")
            parser.add_argument(
                "--workers", type=int,
                help=f"worker processes (default: config, else GRASPFORGE_WORKERS={settings.GRASPFORGE_WORKERS})",
            )
        self.add_command_arguments(parser)

    # ---- hooks -------------------------------------------------------

    def add_command_arguments(self, parser) -> None:
        pass

    def artifact_dir(self, options: dict) -> Optional[Path]:
        """Directory receiving run.json; None disables the record."""
        return None

    def run(self, cfg: Optional[RunConfig], recorder: Optional[RunRecorder], **options) -> Any:
        raise NotImplementedError

    # ---- helpers -----------------------------------------------------

    @staticmethod
    def dir_of(out: str | Path) -> Path:
        """--out may name a file or a directory; provenance goes next to it."""
        p = Path(out)
        return p.parent if p.suffix else p

    def build_config(self, options: dict) -> RunConfig:
        overrides = list(options.get("overrides") or [])
        if options.get("seed") is not None:
            overrides.append(f"seed={int(options['seed'])}")
        cfg = load_run_config(options.get("config"), overrides)
        # --workers > config file or --set > GRASPFORGE_WORKERS
        if options.get("workers") is not None:
            cfg.workers = max(1, int(options["workers"]))
        elif "workers" not in cfg.model_fields_set:
            cfg.workers = settings.GRASPFORGE_WORKERS
        return cfg

    # ---- entry -------------------------------------------------------

    def handle(self, *args, **options):
        cfg: Optional[RunConfig] = None
        recorder: Optional[RunRecorder] = None
        t0 = time.perf_counter()
        try:
            if self.uses_run_config:
                cfg = self.build_config(options)
                out_dir = self.artifact_dir(options)
                if out_dir is not None:
                    recorder = RunRecorder(self._name(), self.invocation_argv or list(sys.argv), cfg, out_dir)
            logger.info("%s: start", self._name())
            self.run(cfg, recorder, **options)
        except CommandError:
            raise
        except ValidationError as e:
            raise CommandError(f"invalid input: {e}", returncode=2) from e
        except GraspforgeError as e:
            if recorder is not None:
                recorder.record_timing("total_s", time.perf_counter() - t0)
                recorder.extra["error"] = f"{type(e).__name__}: {e}"
                recorder.write(status="error")
            raise CommandError(f"{type(e).__name__}: {e}", returncode=2) from e

        if recorder is not None:
            recorder.record_timing("total_s", time.perf_counter() - t0)
            recorder.write()
        logger.info("%s: done in %.1fs", self._name(), time.perf_counter() - t0)

    def _name(self) -> str:
        return self.__module__.rsplit(".", 1)[-1].replace("_", "-")

