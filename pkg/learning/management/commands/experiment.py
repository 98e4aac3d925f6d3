# learning/management/commands/experiment.py
from __future__ import annotations

from pathlib import Path

from core.management.base import GraspforgeCommand
from learning.services.experiment import load_experiment_spec, run_experiment


class Command(GraspforgeCommand):
    help = "Train one BC policy per data condition (narrow / augmented / mixed) and compare them on ID and OOD shapes."

    def add_command_arguments(self, parser):
        parser.add_argument("--spec", required=True, help="experiment spec JSON")
        parser.add_argument("--out", required=True, help="output directory")

    def artifact_dir(self, options):
        return Path(options["out"])

    def run(self, cfg, recorder, **options):
        spec_path = Path(options["spec"])
        spec = load_experiment_spec(spec_path)
        if spec.config and not options.get("config"):
            # the experiment file's config applies when --config is not given; --set still wins
            cfg = self.build_config({**options, "config": str(spec_path.parent / spec.config)})
            if recorder is not None:
                recorder.config = cfg
        result = run_experiment(spec, cfg, options["out"], workers=cfg.workers, base_dir=spec_path.parent)
        if recorder is not None:
            recorder.extra["experiment_spec"] = spec.model_dump(mode="json")
            recorder.extra["direction_holds"] = result.direction_holds()
        self.stdout.write(result.report)
        self.stdout.write(self.style.SUCCESS(f"Wrote report.txt and results.csv to {options['out']}"))
