# learning/management/commands/train_rl.py
from __future__ import annotations

from pathlib import Path

from django.core.management.base import CommandError

from core.management.base import GraspforgeCommand
from learning.services.baseline import evaluate_residual
from learning.services.policy import load_residual_agent
from learning.services.rollouts import agent_hand
from learning.services.trainer import train_rl


class Command(GraspforgeCommand):
    help = "Train the residual grasp policy with PPO; writes policy.ckpt and metrics.csv into --out."

    def add_command_arguments(self, parser):
        parser.add_argument("--out", required=True, help="output directory")
        parser.add_argument("--resume", help="checkpoint to continue from (update numbering continues)")
        parser.add_argument("--total-updates", type=int, help="shorthand for --set ppo.total_updates=N")
        parser.add_argument("--eval-baseline", action="store_true",
                            help="after training, compare against the zero-residual reference "
                                 "on ppo.eval_episodes paired episodes")

    def artifact_dir(self, options):
        return Path(options["out"])

    def run(self, cfg, recorder, **options):
        if options.get("total_updates") is not None:
            if options["total_updates"] < 1:
                raise CommandError("--total-updates must be >= 1", returncode=1)
            cfg.ppo.total_updates = options["total_updates"]
        out = Path(options["out"])
        result = train_rl(cfg, out, resume=options.get("resume"), workers=cfg.workers)
        if recorder is not None:
            recorder.extra["updates"] = [result.first_update, result.last_update]
            recorder.extra["checkpoint"] = str(result.checkpoint)
            if options.get("resume"):
                recorder.extra["resumed_from"] = str(options["resume"])
        self.stdout.write(self.style.SUCCESS(
            f"Trained updates {result.first_update}..{result.last_update}; "
            f"final success rate {result.final_success_rate:.3f}; wrote {result.checkpoint}"))

        if options.get("eval_baseline"):
            agent = load_residual_agent(result.checkpoint, agent_hand(cfg), cfg.skill)
            cmp = evaluate_residual(agent, cfg, workers=cfg.workers)
            if recorder is not None:
                recorder.extra["baseline_comparison"] = cmp.as_dict()
            self.stdout.write(
                f"residual {cmp.policy_successes}/{cmp.episodes} vs zero-residual "
                f"{cmp.baseline_successes}/{cmp.episodes}  sign test p={cmp.p_value:.4g}")
