# datagen/management/commands/inspect_data.py
from __future__ import annotations

import json

from core.management.base import GraspforgeCommand
from datagen.services.dataset import read_dataset
from datagen.services.generator import summarize_dataset


class Command(GraspforgeCommand):
    help = "Verify a dataset (version, completeness, hash) and print its summary as JSON."

    uses_run_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("--data", required=True, help="dataset directory")

    def run(self, cfg, recorder, **options):
        summary = summarize_dataset(read_dataset(options["data"]))
        self.stdout.write(json.dumps(summary, indent=2, sort_keys=True))
