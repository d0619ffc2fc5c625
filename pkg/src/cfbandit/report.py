"""Plot-ready curves and an accuracy table from a finished replay directory."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from cfbandit.io import DataError, read_summary, read_trajectory
from cfbandit.replay import SummaryRow

SIGNIFICANCE = 0.01
SUMMARY_FILE = "summary.csv"
TRAJECTORY_DIR = "trajectories"
REPORT_DIR = "report"


def trajectory_path(out_dir, context: str, run_index: int, policy: str) -> Path:
    return Path(out_dir) / TRAJECTORY_DIR / context / f"run{run_index:03d}_{policy}.csv"


def starred(row: SummaryRow, rows_by_policy: dict[str, SummaryRow]) -> bool:
    """A cell gets a star when the policy beats the strongest other policy at
    that cutoff and the paired test rejects equality at p < 0.01."""
    if row.p_vs_best_other is None or row.p_vs_best_other >= SIGNIFICANCE:
        return False
    other = rows_by_policy.get(row.best_other)
    return other is not None and row.mean_acc > other.mean_acc


def _ordered(seq):
    return list(dict.fromkeys(seq))


def format_table(rows: list[SummaryRow]) -> str:
    contexts = _ordered(r.context for r in rows)
    cutoffs = sorted({r.cutoff for r in rows})
    by_key = {(r.context, r.policy, r.cutoff): r for r in rows}
    lines = []
    for ctx in contexts:
        policies = _ordered(r.policy for r in rows if r.context == ctx)
        n = next(r.n for r in rows if r.context == ctx)
        lines.append(f"{ctx} (n = {n})")
        lines.append("policy".ljust(8) + "".join(f"t={c}".rjust(18) for c in cutoffs))
        for p in policies:
            cells = []
            for c in cutoffs:
                r = by_key.get((ctx, p, c))
                if r is None:
                    cells.append("-".rjust(18))
                    continue
                peers = {q: by_key[(ctx, q, c)] for q in policies if (ctx, q, c) in by_key}
                mark = "*" if starred(r, peers) else " "
                cells.append(f"{r.mean_acc:.3f} ({r.std_acc:.3f}){mark}".rjust(18))
            lines.append(p.ljust(8) + "".join(cells))
        lines.append("")
    lines.append(f"* better than every other policy, paired t-test p < {SIGNIFICANCE}")
    return "\n".join(lines) + "\n"


def mean_curves(out_dir, context: str, policies: list[str], n: int) -> dict[str, np.ndarray]:
    curves = {}
    for p in policies:
        total = None
        for run_index in range(1, n + 1):
            path = trajectory_path(out_dir, context, run_index, p)
            if not path.exists():
                raise DataError(f"missing trajectory file {path}")
            cum = read_trajectory(path, p).cumulative
            if total is None:
                total = np.zeros_like(cum)
            elif len(cum) != len(total):
                raise DataError(f"{path}: trajectory length differs from run 1")
            total += cum
        curves[p] = total / n
    return curves


def write_curves(path, curves: dict[str, np.ndarray]) -> None:
    names = list(curves)
    horizon = len(curves[names[0]])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + names)
        for t in range(horizon):
            w.writerow([t + 1] + [repr(float(curves[p][t])) for p in names])


def build_report(out_dir) -> list[Path]:
    """Write ``report/curves_<context>.csv`` and ``report/table.txt``."""
    out_dir = Path(out_dir)
    summary = out_dir / SUMMARY_FILE
    if not summary.exists():
        raise DataError(f"no {SUMMARY_FILE} in {out_dir}")
    rows = read_summary(summary)
    if not rows:
        raise DataError(f"{summary}: no rows")
    dest = out_dir / REPORT_DIR
    dest.mkdir(exist_ok=True)
    written = []
    grouped = defaultdict(list)
    for r in rows:
        grouped[r.context].append(r)
    for ctx, ctx_rows in grouped.items():
        policies = _ordered(r.policy for r in ctx_rows)
        curves = mean_curves(out_dir, ctx, policies, ctx_rows[0].n)
        path = dest / f"curves_{ctx}.csv"
        write_curves(path, curves)
        written.append(path)
    table = dest / "table.txt"
    table.write_text(format_table(rows), encoding="utf-8")
    written.append(table)
    return written
