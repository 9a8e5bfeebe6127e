"""Matplotlib figure rendering alongside the CSV reports.

Figures are written as PNG with fixed metadata so repeated runs of the same
configuration produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .attack import AttackReport, MtdResult, TvlaReport

_SAVE_KWARGS = {"dpi": 110, "metadata": {"Software": None}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_correlation(report: AttackReport, path, true_byte: int | None = None) -> None:
    """|rho| vs sample for every guess, the best guess highlighted."""
    fig, ax = plt.subplots(figsize=(7, 3.2))
    rho = np.abs(report.correlations)
    xs = np.arange(rho.shape[1])
    for guess in range(256):
        if guess in (report.best_guess, true_byte):
            continue
        ax.plot(xs, rho[guess], color="0.8", lw=0.4, zorder=1)
    if true_byte is not None and true_byte != report.best_guess:
        ax.plot(xs, rho[true_byte], color="tab:blue", lw=1.0, zorder=2,
                label=f"true key 0x{true_byte:02x}")
    ax.plot(xs, rho[report.best_guess], color="tab:red", lw=1.0, zorder=3,
            label=f"best guess 0x{report.best_guess:02x}")
    ax.set_xlabel("sample")
    ax.set_ylabel(r"|$\rho$|")
    ax.set_title(f"CPA, byte {report.target_byte}, {report.traces_used} traces")
    ax.legend(loc="upper right", fontsize=8)
    _finish(fig, path)


def plot_rank_curve(result: MtdResult, path, label: str = "") -> None:
    """Rank of the true key byte vs analyzed trace count."""
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.step(result.checkpoints, result.rank_at_checkpoint, where="post", color="tab:blue")
    ax.axhline(1, color="tab:green", lw=0.8, ls="--")
    if result.mtd is not None:
        ax.axvline(result.mtd, color="tab:red", lw=0.8, ls="--", label=f"MTD = {result.mtd}")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("traces analyzed")
    ax.set_ylabel("rank of true key byte")
    ax.set_title(label or "key rank vs traces")
    _finish(fig, path)


def plot_tvla(report: TvlaReport, path, label: str = "") -> None:
    """t statistic per sample with the +/-4.5 leakage threshold."""
    fig, ax = plt.subplots(figsize=(7, 3.2))
    xs = np.arange(len(report.t_values))
    ax.plot(xs, report.t_values, color="tab:blue", lw=0.7)
    for y in (4.5, -4.5):
        ax.axhline(y, color="tab:red", lw=0.8, ls="--")
    ax.set_xlabel("sample")
    ax.set_ylabel("Welch t")
    title = label or "TVLA"
    ax.set_title(f"{title} (max |t| = {report.max_abs_t:.2f}, {report.traces_per_group}/group)")
    _finish(fig, path)


def plot_sweep(rows: list, axis: str, path) -> None:
    """Sweep summary: MTD (left axis) and max |t| (right axis) vs swept value."""
    ok = [r for r in rows if not r.get("error")]
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    xs = [r["value"] for r in ok]
    mtd = [r["mtd"] if isinstance(r["mtd"], (int, float)) else np.nan for r in ok]
    ax.plot(xs, mtd, "o-", color="tab:blue", label="MTD")
    ax.set_xlabel(axis)
    ax.set_ylabel("MTD (traces)")
    if any(isinstance(v, (int, float)) and np.isfinite(v) for v in mtd):
        ax.set_yscale("log")
    tvals = [r.get("max_abs_t") for r in ok]
    if any(v is not None for v in tvals):
        ax2 = ax.twinx()
        ax2.plot(xs, [np.nan if v is None else v for v in tvals], "s--",
                 color="tab:orange", label="max |t|")
        ax2.set_ylabel("max |t|")
    ax.set_title(f"sweep over {axis}")
    _finish(fig, path)
