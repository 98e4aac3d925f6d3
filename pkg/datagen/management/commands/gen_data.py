# datagen/management/commands/gen_data.py
from __future__ import annotations

from pathlib import Path

from django.core.management.base import CommandError

from core.management.base import GraspforgeCommand
from datagen.services.generator import generate_dataset
from learning.services.policy import load_residual_agent
from learning.services.rollouts import agent_hand


class Command(GraspforgeCommand):
    help = "Generate a grasp dataset (manifest.json + episodes.jsonl) by running the skill with a residual policy."

    def add_command_arguments(self, parser):
        parser.add_argument("--out", required=True, help="dataset directory")
        parser.add_argument("--episodes", type=int, required=True, help="episodes to store")
        parser.add_argument("--policy", help="residual policy checkpoint from train-rl")
        parser.add_argument("--zero-residual", action="store_true", help="run the reference trajectory alone")
        parser.add_argument("--keep-failures", action="store_true", help="also store failed episodes")

    def artifact_dir(self, options):
        return Path(options["out"])

    def run(self, cfg, recorder, **options):
        if options["episodes"] < 0:
            raise CommandError("--episodes must be >= 0", returncode=1)
        zero = bool(options.get("zero_residual") or cfg.datagen.zero_residual)
        if options.get("policy") and zero:
            raise CommandError("--policy and --zero-residual are exclusive", returncode=1)
        if not options.get("policy") and not zero:
            raise CommandError("pass --policy <ckpt> or --zero-residual", returncode=1)

        agent = None if zero else load_residual_agent(options["policy"], agent_hand(cfg), cfg.skill)
        keep = bool(options.get("keep_failures") or cfg.datagen.keep_failures)
        result = generate_dataset(
            cfg, options["out"], options["episodes"],
            seed=cfg.seed, workers=cfg.workers, agent=agent,
            keep_failures=keep, zero_residual=zero,
        )
        if recorder is not None:
            recorder.record_timing("generation_s", result.seconds)
            recorder.extra["dataset"] = {
                "count": result.manifest["count"],
                "successes": result.manifest["successes"],
                "attempts": result.attempts,
                "skipped": result.skipped,
                "content_sha256": result.manifest["content_sha256"],
            }
        self.stdout.write(self.style.SUCCESS(
            f"Stored {result.manifest['count']} episodes from {result.attempts} attempts "
            f"({result.skipped} skipped, {result.episodes_per_minute:.1f} episodes/min) in {options['out']}"))
