# learning/management/commands/plot_metrics.py
from __future__ import annotations

from pathlib import Path

from django.core.management.base import CommandError

from core.management.base import GraspforgeCommand
from core.services.charting import render_training_curves_png
from learning.services.trainer import read_metrics


class Command(GraspforgeCommand):
    help = "Render metrics.csv from train-rl as a PNG of reward, success rate and losses."

    uses_run_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("--metrics", required=True, help="metrics.csv written by train-rl")
        parser.add_argument("--out", required=True, help="PNG file")
        parser.add_argument("--smooth", type=int, default=None, help="moving-average window")

    def run(self, cfg, recorder, **options):
        src = Path(options["metrics"])
        if not src.is_file():
            raise CommandError(f"metrics file not found: {src}", returncode=1)
        rows = read_metrics(src)
        out = Path(options["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(render_training_curves_png(rows, smooth=options.get("smooth")))
        self.stdout.write(self.style.SUCCESS(f"Wrote {out} ({len(rows)} updates)"))
