"""Render figures from a run's trace CSVs.

The four figures summarise a finished run: how large the committed
cluster steps were, what contact counts cost to solve, where sweep
wall time went, and how many clusters were active over the run. All
rendering uses the Agg backend so it works headless.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engine import CLUSTER_COLUMNS, SWEEP_COLUMNS

FIGURES = (
    "timestep_histogram.png",
    "contact_cost.png",
    "phase_breakdown.png",
    "cluster_activity.png",
)


def _read_csv(path: Path, columns: tuple[str, ...]) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(columns):
            raise ValueError(
                f"{path}: unexpected columns {reader.fieldnames}, wanted {list(columns)}"
            )
        rows = list(reader)
    return {
        name: np.array([float(row[name]) for row in rows]) for name in columns
    }


def render_report(trace_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Read sweep.csv and cluster_updates.csv, write the four PNGs.

    Returns the written paths. out_dir defaults to the trace directory,
    keeping figures next to the data they came from.
    """
    trace_dir = Path(trace_dir)
    out = Path(out_dir) if out_dir is not None else trace_dir
    out.mkdir(parents=True, exist_ok=True)
    sweeps = _read_csv(trace_dir / "sweep.csv", SWEEP_COLUMNS)
    updates = _read_csv(trace_dir / "cluster_updates.csv", CLUSTER_COLUMNS)
    written = []
    for name, draw in (
        ("timestep_histogram.png", _draw_timestep_histogram),
        ("contact_cost.png", _draw_contact_cost),
        ("phase_breakdown.png", _draw_phase_breakdown),
        ("cluster_activity.png", _draw_cluster_activity),
    ):
        fig = draw(sweeps, updates)
        path = out / name
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)
    return written


def _draw_timestep_histogram(sweeps, updates):
    fig, ax = plt.subplots(figsize=(6, 4))
    dts = updates["dt_effective"]
    dts = dts[dts > 0]
    if dts.size:
        lo = max(dts.min(), dts.max() * 1e-6)
        bins = np.geomspace(lo * 0.95, dts.max() * 1.05, 40)
        ax.hist(dts, bins=bins, color="#4878b0", edgecolor="white")
        ax.set_xscale("log")
    else:
        ax.text(0.5, 0.5, "no cluster updates", ha="center", transform=ax.transAxes)
    ax.set_xlabel("committed step size")
    ax.set_ylabel("cluster updates")
    ax.set_title("Step sizes of committed cluster updates")
    fig.tight_layout()
    return fig


def _draw_contact_cost(sweeps, updates):
    fig, ax = plt.subplots(figsize=(6, 4))
    mask = updates["n_contacts"] > 0
    if mask.any():
        ax.scatter(
            updates["n_contacts"][mask],
            updates["solve_us"][mask],
            s=14,
            alpha=0.6,
            color="#b04848",
        )
    else:
        ax.text(0.5, 0.5, "no contacts recorded", ha="center", transform=ax.transAxes)
    ax.set_xlabel("contacts in cluster update")
    ax.set_ylabel("solve time (us)")
    ax.set_title("Contact count vs solve cost")
    fig.tight_layout()
    return fig


_PHASES = ("phase_broad_us", "phase_cluster_us", "phase_dt_us", "phase_solve_us")


def _draw_phase_breakdown(sweeps, updates):
    fig, ax = plt.subplots(figsize=(6, 4))
    x = sweeps["sweep"]
    stacks = [sweeps[name] for name in _PHASES]
    labels = [name.removeprefix("phase_").removesuffix("_us") for name in _PHASES]
    if x.size and any(s.sum() > 0 for s in stacks):
        ax.stackplot(x, *stacks, labels=labels, alpha=0.85)
        ax.legend(loc="upper right", fontsize=8)
    else:
        ax.text(
            0.5,
            0.5,
            "no timings (deterministic run)",
            ha="center",
            transform=ax.transAxes,
        )
    ax.set_xlabel("sweep")
    ax.set_ylabel("phase time (us)")
    ax.set_title("Wall time per sweep by phase")
    fig.tight_layout()
    return fig


def _draw_cluster_activity(sweeps, updates):
    fig, ax = plt.subplots(figsize=(6, 4))
    x = sweeps["sweep"]
    if x.size:
        ax.plot(x, sweeps["n_clusters"], label="clusters", color="#4878b0")
        ax.plot(x, sweeps["n_active"], label="active", color="#50a050")
        ax.legend(loc="best", fontsize=8)
    else:
        ax.text(0.5, 0.5, "no sweeps", ha="center", transform=ax.transAxes)
    ax.set_xlabel("sweep")
    ax.set_ylabel("count")
    ax.set_title("Cluster population and masking")
    fig.tight_layout()
    return fig
