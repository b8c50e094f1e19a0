"""Figure rendering for run reports: PNGs written alongside the CSV output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_run_figures", "render_allocation_figures", "render_compare_figure"]


def render_run_figures(history: list[dict], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = np.array([d["t"] for d in history])
    written = []

    fig, ax = plt.subplots(figsize=(8, 4))
    mean = np.array([d["intensity_mean"] for d in history])
    q05 = np.array([d["intensity_q05"] for d in history])
    q95 = np.array([d["intensity_q95"] for d in history])
    ax.plot(t, mean, color="C0", label="posterior mean")
    ax.fill_between(t, q05, q95, color="C0", alpha=0.2, label="5%-95%")
    ax.set_xlabel("time")
    ax.set_ylabel("intensity")
    ax.set_title("Online estimated intensity")
    ax.legend()
    path = out / "intensity.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(8, 3))
    ess = np.array([d["ess"] for d in history])
    ax.plot(t, ess, color="C1")
    resampled = [d["t"] for d in history if d["resampled"]]
    for x in resampled:
        ax.axvline(x, color="0.8", linewidth=0.8, zorder=0)
    ax.set_xlabel("time")
    ax.set_ylabel("ESS")
    ax.set_title("Effective sample size (grey lines: resampling)")
    path = out / "ess.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(t, [d["unique_pre"] for d in history], color="C2", label="pre-resampling")
    ax.plot(
        t,
        [d["unique_post"] for d in history],
        color="C2",
        linestyle=":",
        label="post-resampling",
    )
    ax.set_xlabel("time")
    ax.set_ylabel("unique particles")
    ax.legend()
    path = out / "unique_particles.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written


def render_allocation_figures(log: list[dict], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    updates = sorted({r["update"] for r in log})
    per_update = [[r["allocation"] for r in log if r["update"] == u] for u in updates]
    n_streams = max(len(v) for v in per_update)
    total = sum(per_update[0])
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.boxplot(per_update, positions=updates, widths=0.6, manage_ticks=False)
    ax.axhline(total / n_streams, color="C3", linestyle=":", label="equal split")
    ax.set_xlabel("update")
    ax.set_ylabel("allocated particles")
    ax.set_title("Sample sizes allocated per stream")
    ax.legend()
    path = out / "allocations.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def render_compare_figure(smc_history, smcmc_history, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = np.array([d["t"] for d in smc_history])
    smc = np.array([d["intensity_mean"] for d in smc_history])
    ref = np.array([d["intensity_mean"] for d in smcmc_history])
    se = np.array([d["intensity_se"] for d in smcmc_history])
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(t, ref, color="k", label="SMCMC")
    ax.fill_between(t, ref - 3 * se, ref + 3 * se, color="k", alpha=0.15, label="3 s.e.")
    ax.plot(t, smc, color="C0", label="SMC")
    ax.set_xlabel("time")
    ax.set_ylabel("intensity at update time")
    ax.legend()
    path = out / "compare.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
