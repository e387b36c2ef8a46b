"""
Figures rendered next to the CSV output. The CSV files remain the primary
record; these are convenience views of the same numbers.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .config import ExperimentConfig


def plot_fpr(aggs: dict, cfg: ExperimentConfig, out: Path) -> list[Path]:
    """One log-scale relative-FPR panel per link probability."""
    paths = []
    for p in cfg.network.p:
        fig = Figure(figsize=(6.0, 4.0))
        ax = fig.add_subplot()
        for s in cfg.solvers:
            agg = aggs.get((s.label, p))
            if agg is None or agg.iters.size == 0:
                continue
            y = agg.mean["rel_fpr"]
            ok = np.isfinite(y) & (y > 0)
            ax.semilogy(agg.iters[ok], y[ok], label=s.label)
        ax.set_xlabel("iteration")
        ax.set_ylabel("relative FPR")
        ax.set_title(f"p = {p:g}" if p < 1 else "fixed network")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        path = out / f"fpr_p{p:g}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        paths.append(path)
    return paths


def plot_neps(neps: dict, cfg: ExperimentConfig, path: Path) -> Path:
    """Mean iterations to reach epsilon against p; unreached runs are censored."""
    from .experiment import censored_mean

    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot()
    ps = list(cfg.network.p)
    for s in cfg.solvers:
        ys = [censored_mean(neps.get((s.label, p), []), cfg.max_iter) for p in ps]
        ax.plot(ps, ys, marker="o", label=s.label)
    ax.set_xlabel("link activation probability p")
    ax.set_ylabel(f"iterations to rel. FPR <= {cfg.epsilon:g}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    return path
