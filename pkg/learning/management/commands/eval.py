# learning/management/commands/eval.py
from __future__ import annotations

from django.core.management.base import CommandError

from core.management.base import GraspforgeCommand
from learning.services.bc import load_bc_policy
from learning.services.evaluation import eval_policy, load_eval_shapes
from learning.services.export_csv import format_success_table, iter_rows_for_success_table, write_rows


class Command(GraspforgeCommand):
    help = "Evaluate a behavior-cloning policy closed loop on a set of shapes; writes phi_id,successes,trials,rate."

    def add_command_arguments(self, parser):
        parser.add_argument("--ckpt", required=True, help="BC checkpoint from train-bc")
        parser.add_argument("--shapes", required=True, help="JSON list of shapes (see docs/usage.md)")
        parser.add_argument("--trials", type=int, help="trials per shape (default: eval.trials)")
        parser.add_argument("--out", required=True, help="CSV report path")

    def artifact_dir(self, options):
        return self.dir_of(options["out"])

    def run(self, cfg, recorder, **options):
        trials = options.get("trials") or cfg.eval.trials
        if trials < 1:
            raise CommandError("--trials must be >= 1", returncode=1)
        policy = load_bc_policy(options["ckpt"])
        shapes = load_eval_shapes(options["shapes"])
        table = eval_policy(policy, shapes, trials, cfg.seed, cfg, workers=cfg.workers)
        path = write_rows(iter_rows_for_success_table(table), options["out"])
        if recorder is not None:
            recorder.extra["rows"] = list(table.rows)
        self.stdout.write(format_success_table(table))
        self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
