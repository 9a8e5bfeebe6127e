"""Plot-ready CSV writers for attack results and sweep summaries."""

from __future__ import annotations

import csv

import numpy as np

from .attack import AttackReport, MtdResult, TvlaReport


def write_correlation_csv(report: AttackReport, path) -> None:
    """Guess x sample rho matrix; undefined entries are left empty."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["guess"] + [f"sample_{i}" for i in range(report.correlations.shape[1])])
        for guess in range(256):
            row = [
                "" if np.isnan(v) else f"{v:.9g}"
                for v in report.correlations[guess]
            ]
            writer.writerow([guess] + row)


def write_rank_curve_csv(result: MtdResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["traces", "rank_of_true_key"])
        for cp, rank in zip(result.checkpoints, result.rank_at_checkpoint):
            writer.writerow([cp, rank])


def write_tvla_csv(report: TvlaReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "t_value"])
        for i, t in enumerate(report.t_values):
            writer.writerow([i, "" if np.isnan(t) else f"{t:.9g}"])


def write_sweep_summary_csv(rows: list, path) -> None:
    """One row per sweep point: value, MTD, max |t|, max droop, error."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "value", "mtd", "max_abs_t", "max_droop_v", "error"])
        for row in rows:
            writer.writerow([
                row.get("axis", ""),
                row.get("value", ""),
                row.get("mtd", ""),
                "" if row.get("max_abs_t") is None else f"{row['max_abs_t']:.6g}",
                "" if row.get("max_droop_v") is None else f"{row['max_droop_v']:.6g}",
                row.get("error", ""),
            ])
