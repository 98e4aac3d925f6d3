# learning/services/export_csv.py
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Union

from core.enums import EvalSplit
from learning.services.evaluation import EvalTable

DEFAULT_FIELDS: List[str] = ["phi_id", "successes", "trials", "rate"]
EXPERIMENT_FIELDS: List[str] = ["condition", "phi_id", "split", "successes", "trials", "rate"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return "" if v is None else str(v)


def iter_rows_for_success_table(table: EvalTable, fields: Optional[List[str]] = None) -> Iterable[List[str]]:
    """Header, one row per shape, then total_id / total_ood rows for the splits present."""
    cols = fields or DEFAULT_FIELDS
    yield cols
    for row in table.rows:
        yield [_fmt(row.get(f)) for f in cols]
    for split in EvalSplit:
        s, n = table.totals(split)
        if n:
            total = {"phi_id": f"total_{split.value}", "successes": s, "trials": n, "rate": s / n}
            yield [_fmt(total.get(f)) for f in cols]


def iter_rows_for_experiment(tables: Mapping[str, EvalTable]) -> Iterable[List[str]]:
    yield EXPERIMENT_FIELDS
    for condition, table in tables.items():
        for row in table.rows:
            yield [condition, row["phi_id"], table.splits[row["phi_id"]].value,
                   str(row["successes"]), str(row["trials"]), _fmt(row["rate"])]


def write_rows(rows: Iterable[List[str]], path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    return p


def format_success_table(table: EvalTable, title: str = "") -> str:
    """Plain-text table: one line per shape, then the ID / OOD totals as k/n."""
    lines = [title] if title else []
    lines.append(f"{'phi_id':<12} {'success':>9} {'rate':>6}")
    lines.append("-" * 29)
    for row in table.rows:
        lines.append(f"{row['phi_id']:<12} {row['successes']:>4}/{row['trials']:<4} {row['rate']:>6.2f}")
    lines.append("-" * 29)
    for split in EvalSplit:
        s, n = table.totals(split)
        if n:
            lines.append(f"{split.value.upper():<12} {s:>4}/{n:<4} {s / n:>6.2f}")
    return "\n".join(lines)


__all__ = [
    "DEFAULT_FIELDS",
    "EXPERIMENT_FIELDS",
    "iter_rows_for_success_table",
    "iter_rows_for_experiment",
    "write_rows",
    "format_success_table",
]
