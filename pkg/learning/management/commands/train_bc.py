# learning/management/commands/train_bc.py
from __future__ import annotations

from pathlib import Path

from django.core.management.base import CommandError

from core.management.base import GraspforgeCommand
from datagen.services.dataset import read_datasets
from learning.services.bc import save_bc_policy, train_bc


class Command(GraspforgeCommand):
    help = "Train a behavior-cloning policy on observable (state, action) pairs."

    def add_command_arguments(self, parser):
        parser.add_argument("--data", required=True, help="dataset directory, or several separated by commas")
        parser.add_argument("--out", required=True, help="checkpoint file to write")

    def artifact_dir(self, options):
        return self.dir_of(options["out"])

    def run(self, cfg, recorder, **options):
        paths = [p.strip() for p in options["data"].split(",") if p.strip()]
        if not paths:
            raise CommandError("--data needs at least one dataset directory", returncode=1)
        records = [r for ds in read_datasets(paths) for r in ds.records]
        policy, result = train_bc(records, cfg.bc, seed=cfg.seed)
        path = save_bc_policy(policy, Path(options["out"]), epochs=cfg.bc.epochs)
        if recorder is not None:
            recorder.extra["datasets"] = paths
            recorder.extra["samples"] = result.samples
            recorder.extra["final_loss"] = result.final_loss
        self.stdout.write(self.style.SUCCESS(
            f"Trained on {result.samples} pairs, final loss {result.final_loss:.6f}; wrote {path}"))
