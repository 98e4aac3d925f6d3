# learning/services/experiment.py
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.enums import Condition, EvalSplit
from core.errors import ConfigError
from core.pydantic_models import ExperimentSpecModel, RunConfig, SamplingSection
from core.services.charting import render_success_bars_png
from core.utils.rng import STREAM_SHAPES, derive_rng
from datagen.services.dataset import read_dataset, read_manifest
from datagen.services.episodes import EpisodeRecord
from learning.services.bc import BcTrainResult, save_bc_policy, train_bc
from learning.services.evaluation import EvalShape, EvalTable, eval_policy
from learning.services.export_csv import (
    format_success_table,
    iter_rows_for_experiment,
    iter_rows_for_success_table,
    write_rows,
)

logger = logging.getLogger(__name__)

PHI_MATCH_TOL = 1e-9
MAX_OOD_DRAWS = 100_000

# real-robot results the desk-scale comparison is read against: (ID, OOD) as (successes, trials)
REAL_ROBOT_REFERENCE: Dict[str, Tuple[Tuple[int, int], Tuple[int, int]]] = {
    "real-only": ((5, 5), (1, 10)),
    "mixed": ((5, 5), (10, 10)),
    "sim-only": ((0, 5), (0, 10)),
}

SCOPE_NOTES = (
    "The narrow condition stands in for the real-only demonstrations: episodes of one fixed",
    "shape phi* replace teleoperated data of a single in-distribution object. Augmented stands",
    "in for sim-only and mixed is the union of both.",
    "All data and evaluation come from one simulator, so there is no sim-to-real gap here.",
    "Only the generalization axis is tested: augmented / mixed OOD >= narrow OOD.",
    "OOD objects differ in geometry only (no color or texture analog).",
)


# ---------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------
def _phi_bounds(sampling: SamplingSection) -> Tuple[np.ndarray, np.ndarray]:
    lo = np.array([sampling.a12[0], sampling.a12[0], sampling.a3[0], sampling.eps[0], sampling.eps[0]])
    hi = np.array([sampling.a12[1], sampling.a12[1], sampling.a3[1], sampling.eps[1], sampling.eps[1]])
    return lo, hi


def normalized_phi(phi, sampling: SamplingSection) -> np.ndarray:
    """Every component scaled to [0, 1] by the sampling bounds."""
    lo, hi = _phi_bounds(sampling)
    return (np.asarray(phi, dtype=float) - lo) / (hi - lo)


def _matches(phi, others: Sequence) -> bool:
    p = np.asarray(phi, dtype=float)
    return any(np.allclose(p, o, rtol=0.0, atol=PHI_MATCH_TOL) for o in others)


def make_ood_shapes(
    phi_star,
    n: int,
    rng: np.random.Generator,
    exclude: Sequence = (),
    sampling: Optional[SamplingSection] = None,
    radius: float = 0.3,
) -> List[Tuple[float, ...]]:
    """
    `n` shapes drawn uniformly from the sampling bounds, each farther than
    `radius` from phi* in normalized parameter space and not equal to any
    excluded (training) shape.
    """
    spec = sampling or SamplingSection()
    lo, hi = _phi_bounds(spec)
    star = normalized_phi(phi_star, spec)
    out: List[Tuple[float, ...]] = []
    for _ in range(MAX_OOD_DRAWS):
        if len(out) >= n:
            break
        u = rng.uniform(0.0, 1.0, 5)
        if np.linalg.norm(u - star) <= radius:
            continue
        phi = tuple(float(v) for v in lo + u * (hi - lo))
        if _matches(phi, exclude) or _matches(phi, out):
            continue
        out.append(phi)
    if len(out) < n:
        raise ConfigError(f"only {len(out)} of {n} OOD shapes found outside radius {radius}")
    return out


def check_disjoint(eval_shapes: Sequence[EvalShape], training_phis: Sequence, phi_star,
                   sampling: SamplingSection, radius: float) -> None:
    star = normalized_phi(phi_star, sampling)
    for s in eval_shapes:
        if s.split is not EvalSplit.OOD:
            continue
        if _matches(s.phi, training_phis):
            raise ConfigError(f"OOD shape {s.phi_id} {s.phi} also appears in the training data")
        if np.linalg.norm(normalized_phi(s.phi, sampling) - star) <= radius:
            raise ConfigError(f"OOD shape {s.phi_id} lies within radius {radius} of phi*")


# ---------------------------------------------------------------------
# Conditions
# ---------------------------------------------------------------------
def condition_records(
    condition: Condition,
    narrow: Sequence[EpisodeRecord],
    augmented: Sequence[EpisodeRecord],
    phi_star,
) -> List[EpisodeRecord]:
    """narrow: only episodes whose metadata phi equals phi*; augmented: all; mixed: both."""
    star = [np.asarray(phi_star, dtype=float)]
    narrow_star = [r for r in narrow if _matches(r.meta["phi"], star)]
    if condition is Condition.NARROW:
        return narrow_star
    if condition is Condition.AUGMENTED:
        return list(augmented)
    return narrow_star + list(augmented)


@dataclass
class ExperimentResult:
    tables: Dict[str, EvalTable] = field(default_factory=dict)
    training: Dict[str, BcTrainResult] = field(default_factory=dict)
    eval_shapes: List[EvalShape] = field(default_factory=list)
    report: str = ""
    out_dir: Optional[Path] = None

    def ood_rate(self, condition: str) -> float:
        return self.tables[condition].rate(EvalSplit.OOD)

    def direction_holds(self) -> Optional[bool]:
        if Condition.NARROW.value not in self.tables:
            return None
        base = self.ood_rate(Condition.NARROW.value)
        others = [c for c in self.tables if c != Condition.NARROW.value]
        return all(self.ood_rate(c) >= base for c in others) if others else None


def load_experiment_spec(path: Union[str, Path]) -> ExperimentSpecModel:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"experiment spec not found: {p}")
    try:
        return ExperimentSpecModel.model_validate_json(p.read_text(encoding="utf-8"))
    except ValueError as e:
        raise ConfigError(f"invalid experiment spec {p}: {e}") from e


def _resolve(base: Optional[Path], path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


def run_experiment(
    spec: ExperimentSpecModel,
    cfg: RunConfig,
    out_dir: Union[str, Path],
    workers: int = 1,
    base_dir: Optional[Path] = None,
) -> ExperimentResult:
    """
    One BC policy per condition, all evaluated on the same ID / OOD shapes
    with the same trial seeds. Writes per-condition checkpoints and CSVs,
    results.csv, report.txt and success_bars.png under `out_dir`.
    """
    out = Path(out_dir)
    narrow_path = _resolve(base_dir, spec.narrow_data)
    augmented_path = _resolve(base_dir, spec.augmented_data)
    needed = {Condition.NARROW: [narrow_path], Condition.AUGMENTED: [augmented_path],
              Condition.MIXED: [narrow_path, augmented_path]}
    for cond in spec.conditions:
        for p in needed[cond]:
            read_manifest(p)

    phi_star = tuple(spec.phi_star or cfg.eval.phi_star)
    trials = spec.trials or cfg.eval.trials
    uses_narrow = any(c in (Condition.NARROW, Condition.MIXED) for c in spec.conditions)
    uses_augmented = any(c in (Condition.AUGMENTED, Condition.MIXED) for c in spec.conditions)
    narrow = read_dataset(narrow_path).records if uses_narrow else []
    augmented = read_dataset(augmented_path).records if uses_augmented else []

    per_condition = {c: condition_records(c, narrow, augmented, phi_star) for c in spec.conditions}
    training_phis = sorted({tuple(r.meta["phi"]) for recs in per_condition.values() for r in recs})
    if spec.ood_shapes:
        ood = [tuple(float(v) for v in s) for s in spec.ood_shapes]
    else:
        ood = make_ood_shapes(phi_star, cfg.eval.ood_count, derive_rng(spec.seed, STREAM_SHAPES, 0),
                              exclude=training_phis, sampling=cfg.sampling, radius=cfg.eval.ood_radius)
    shapes = [EvalShape("phi_star", phi_star, EvalSplit.ID)]
    shapes += [EvalShape(f"ood_{i + 1:02d}", phi, EvalSplit.OOD) for i, phi in enumerate(ood)]
    check_disjoint(shapes, training_phis, phi_star, cfg.sampling, cfg.eval.ood_radius)

    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_shapes.json").write_text(
        json.dumps([s.to_dict() for s in shapes], indent=2) + "\n", encoding="utf-8")

    result = ExperimentResult(eval_shapes=shapes, out_dir=out)
    for cond in spec.conditions:
        name = cond.value
        recs = per_condition[cond]
        logger.info("condition %s: %d episodes, %d distinct phi", name, len(recs),
                    len({tuple(r.meta["phi"]) for r in recs}))
        policy, train = train_bc(recs, cfg.bc, seed=spec.seed)
        save_bc_policy(policy, out / name / "policy.ckpt", epochs=cfg.bc.epochs)
        table = eval_policy(policy, shapes, trials, spec.seed, cfg, workers=workers)
        write_rows(iter_rows_for_success_table(table), out / name / "eval.csv")
        result.training[name] = train
        result.tables[name] = table

    write_rows(iter_rows_for_experiment(result.tables), out / "results.csv")
    result.report = format_report(result, phi_star, trials, spec.seed)
    (out / "report.txt").write_text(result.report, encoding="utf-8")
    rates = {c: {"id": t.rate(EvalSplit.ID), "ood": t.rate(EvalSplit.OOD)} for c, t in result.tables.items()}
    (out / "success_bars.png").write_bytes(render_success_bars_png(rates))
    logger.info("experiment written to %s", out)
    return result


def format_report(result: ExperimentResult, phi_star, trials: int, seed: int) -> str:
    """Plain-text report; contains nothing run-dependent beyond the results, so reruns match byte for byte."""
    lines = [
        "Narrow vs augmented grasp data: behavior-cloning generalization",
        "=" * 64,
        "",
        *SCOPE_NOTES,
        "",
        f"phi* = ({', '.join(f'{v:g}' for v in phi_star)})   trials per shape = {trials}   seed = {seed}",
        "",
        f"{'condition':<12} {'pairs':>7} {'loss':>10} {'ID':>9} {'OOD':>9}",
    ]
    for cond, table in result.tables.items():
        s_id, n_id = table.totals(EvalSplit.ID)
        s_ood, n_ood = table.totals(EvalSplit.OOD)
        train = result.training[cond]
        lines.append(f"{cond:<12} {train.samples:>7d} {train.final_loss:>10.5f} "
                     f"{f'{s_id}/{n_id}':>9} {f'{s_ood}/{n_ood}':>9}")
    lines += ["", "Real-robot reference (5 trials per object):",
              f"{'variant':<12} {'ID':>9} {'OOD':>9}"]
    for variant, ((si, ni), (so, no)) in REAL_ROBOT_REFERENCE.items():
        lines.append(f"{variant:<12} {f'{si}/{ni}':>9} {f'{so}/{no}':>9}")

    holds = result.direction_holds()
    verdict = "not evaluated" if holds is None else ("holds" if holds else "does not hold")
    lines += ["", f"Direction check (augmented / mixed OOD >= narrow OOD): {verdict}", ""]
    for cond, table in result.tables.items():
        lines += [format_success_table(table, title=f"[{cond}]"), ""]
    return "\n".join(lines)


__all__ = [
    "REAL_ROBOT_REFERENCE",
    "ExperimentResult",
    "normalized_phi",
    "make_ood_shapes",
    "check_disjoint",
    "condition_records",
    "load_experiment_spec",
    "run_experiment",
    "format_report",
]
