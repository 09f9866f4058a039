"""Figure rendering for the CSV outputs.

CSV files are the contract; every plot here is derived from a CSV
alone, so figures can be regenerated later without rerunning anything.
The CLI renders them next to the CSVs by default (disable with
--no-plot). Uses the Agg backend: files only, no display.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import DataError

__all__ = [
    "plot_reduce_report",
    "plot_compare",
    "plot_tradeoff",
    "plot_stabilization",
]


def _read_rows(csv_path) -> list[dict]:
    path = Path(csv_path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path} has no data rows")
    return rows


def _float_or_none(cell):
    return None if cell in (None, "") else float(cell)


def plot_reduce_report(csv_path, out_path) -> Path:
    """Per-record reduction residuals from a reduce report."""
    rows = _read_rows(csv_path)
    labels = [r["record_id"] for r in rows]
    residuals = [float(r["residual_fro"]) for r in rows]
    method = rows[0]["method"]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(rows) + 2), 3.5))
    ax.bar(range(len(rows)), residuals, color="tab:blue")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("residual (Frobenius)")
    ax.set_title(f"reduction residual per record ({method}, m={rows[0]['m']})")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)


def plot_compare(csv_path, out_path) -> Path:
    """Matched-pair correlations plus the summary metric."""
    rows = _read_rows(csv_path)
    pair_corrs = sorted(
        float(r["corr"]) for r in rows if r["kind"] == "pair"
    )
    summary = [r for r in rows if r["kind"] == "d_l"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(range(len(pair_corrs)), pair_corrs, "o-", ms=3, label="matched pairs")
    if summary:
        value = float(summary[0]["corr"])
        ax.axhline(value, color="tab:red", lw=1, label=f"d_l = {value:.3f}")
        disp = _float_or_none(summary[0]["dispersion"])
        if disp is not None:
            ax.axhspan(value - disp, value + disp, color="tab:red", alpha=0.15)
    ax.set_xlabel("pair (sorted)")
    ax.set_ylabel("|corr|")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)


def plot_tradeoff(csv_path, out_path, timings: dict | None = None) -> Path:
    """d_l per candidate; the baseline arm is drawn as a stripe.

    With timings (the timings.json payload) a second panel shows CPU
    cost per arm.
    """
    rows = _read_rows(csv_path)
    base = [r for r in rows if r["method"] == "baseline"]
    cands = [r for r in rows if r["method"] != "baseline"]
    panels = 2 if timings else 1
    fig, axes = plt.subplots(1, panels, figsize=(5 * panels, 3.8), squeeze=False)
    ax = axes[0][0]
    if base:
        value = float(base[0]["d_l_value"])
        ax.axhline(value, color="tab:blue", lw=1, label="full-data baseline")
        disp = _float_or_none(base[0]["d_l_dispersion"])
        if disp is not None:
            ax.axhspan(value - disp, value + disp, color="tab:blue", alpha=0.2)
    for idx, row in enumerate(cands):
        disp = _float_or_none(row["d_l_dispersion"])
        ax.errorbar(
            [idx], [float(row["d_l_value"])],
            yerr=None if disp is None else [disp],
            fmt="o", capsize=3, label=None,
        )
    ax.set_xticks(range(len(cands)))
    ax.set_xticklabels([r["name"] for r in cands], rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("d_l against reference")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    if timings:
        ax2 = axes[0][1]
        names = [r["name"] for r in rows]
        arm_timings = timings.get("arms", {})
        reduce_ms = [arm_timings.get(n, {}).get("cpu_time_reduce_ms", 0.0) for n in names]
        dl_ms = [arm_timings.get(n, {}).get("cpu_time_dl_ms", 0.0) for n in names]
        xs = range(len(names))
        ax2.bar(xs, reduce_ms, label="reduce")
        ax2.bar(xs, dl_ms, bottom=reduce_ms, label="dictionary learning")
        ax2.set_xticks(list(xs))
        ax2.set_xticklabels(names, rotation=30, ha="right", fontsize=7)
        ax2.set_ylabel("CPU time (ms)")
        ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)


def plot_stabilization(csv_path, out_path) -> Path:
    """d_l versus number of concatenated runs, one line per arm."""
    rows = _read_rows(csv_path)
    arms = []
    for row in rows:
        if row["arm"] not in arms:
            arms.append(row["arm"])
    fig, ax = plt.subplots(figsize=(5, 3.8))
    for arm in arms:
        sub = [r for r in rows if r["arm"] == arm]
        sub.sort(key=lambda r: int(r["l"]))
        ls = [int(r["l"]) for r in sub]
        vals = [float(r["d_l_value"]) for r in sub]
        disps = [_float_or_none(r["d_l_dispersion"]) for r in sub]
        yerr = [0.0 if d is None else d for d in disps]
        ax.errorbar(ls, vals, yerr=yerr, fmt="o-", ms=3, capsize=2, label=arm)
    ax.set_xlabel("l (runs concatenated per side)")
    ax.set_ylabel("d_l")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)
