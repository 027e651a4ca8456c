"""Figures for comparison reports.

Uses the object-oriented matplotlib API with the Agg canvas, so rendering
never touches pyplot's global state or needs a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .runner import Comparison

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "slatecollect",
}
# no timestamps or version strings in the files, so reruns are byte-stable
PNG_METADATA = {"Software": None}


def new_figure(width: float = 5.0, aspect: float = 0.62) -> tuple[Figure, object]:
    fig = Figure(figsize=(width, width * aspect), dpi=120)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def save(fig: Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=PNG_METADATA)
    return path


def plot_view_distribution(comparison: Comparison, path: Path) -> Path:
    with mpl.rc_context(STYLE):
        fig, ax = new_figure()
        for s in comparison.summaries:
            # rank items by views within each replicate, then average the ranked curves
            ranked = np.mean([np.sort(r.views)[::-1] for r in s.results], axis=0)
            ax.plot(np.arange(1, ranked.size + 1), np.maximum(ranked, 0.5), label=s.label, lw=1.2)
        ax.set_yscale("log")
        ax.set_xlabel("item rank by views")
        ax.set_ylabel("views")
        ax.set_title("Exposure distribution")
        ax.legend(frameon=False)
        return save(fig, path)


def plot_cold_start(comparison: Comparison, path: Path) -> Path:
    with mpl.rc_context(STYLE):
        fig, ax = new_figure()
        for s in comparison.summaries:
            curve = s.cold_start()
            ws = sorted(curve)
            ax.plot(ws, [curve[w].mean() for w in ws], marker="o", ms=3, label=s.label)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("window (fraction of horizon)")
        ax.set_ylabel("items first shown within window")
        ax.set_title("Cold start")
        ax.legend(frameon=False)
        return save(fig, path)


def plot_cumulative_clicks(comparison: Comparison, path: Path) -> Path:
    with mpl.rc_context(STYLE):
        fig, ax = new_figure()
        for s in comparison.summaries:
            ax.plot(np.arange(comparison.horizon), s.cumulative_click_curve(), label=s.label, lw=1.2)
        ax.set_xlabel("round")
        ax.set_ylabel("cumulative clicks")
        ax.set_title("Engagement")
        ax.legend(frameon=False)
        return save(fig, path)


def render_all(comparison: Comparison, fig_dir: str | Path) -> dict[str, Path]:
    fig_dir = Path(fig_dir)
    if comparison.horizon == 0:
        return {}
    return {
        "view_distribution": plot_view_distribution(comparison, fig_dir / "view_distribution.png"),
        "cold_start": plot_cold_start(comparison, fig_dir / "cold_start.png"),
        "cumulative_clicks": plot_cumulative_clicks(comparison, fig_dir / "cumulative_clicks.png"),
    }
