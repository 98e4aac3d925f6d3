# core/management/commands/config.py
from __future__ import annotations

import json
from pathlib import Path

from django.core.management.base import CommandError

from core.management.base import GraspforgeCommand
from core.services.configuration_service import default_config_payload


class Command(GraspforgeCommand):
    help = "Print (or write) the reference run config with every default filled in."

    uses_run_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("--emit-default", action="store_true",
                            help="emit the default RunConfig as JSON")
        parser.add_argument("--out", help="write to this file instead of stdout")

    def run(self, cfg, recorder, **options):
        if not options.get("emit_default"):
            raise CommandError("nothing to do: pass --emit-default", returncode=1)

        text = json.dumps(default_config_payload(), indent=2, sort_keys=True)
        out = options.get("out")
        if out:
            path = Path(out)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text + "\n", encoding="utf-8")
            self.stdout.write(self.style.SUCCESS(f"Wrote reference config to {path}"))
        else:
            self.stdout.write(text)
