"""Figures for evaluation reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import EvalReport  # noqa: E402


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(axis="x", labelrotation=30)
    for label in ax.get_xticklabels():
        label.set_horizontalalignment("right")


def plot_report(report: EvalReport, path: str | Path, title: str | None = None) -> Path:
    """Bar chart of #S, #PM and #EM per row, written to ``path``."""
    return plot_comparison({title or "report": report}, path, title=title)


def plot_comparison(
    reports: Mapping[str, EvalReport], path: str | Path, title: str | None = None,
) -> Path:
    """Side-by-side #EM/#PM bars for several reports over the same rows.

    #S is drawn as an outline behind each group.
    """
    path = Path(path)
    names = []
    for rep in reports.values():
        for r in rep.rows:
            if r.name not in names:
                names.append(r.name)
    x = np.arange(len(names))
    width = 0.8 / max(len(reports), 1)

    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(names) + 2), 4.5))
    for k, (label, rep) in enumerate(reports.items()):
        by_name = {r.name: r for r in rep.rows}
        em = [by_name[n].em if n in by_name else 0 for n in names]
        pm = [by_name[n].pm if n in by_name else 0 for n in names]
        s = [by_name[n].n if n in by_name else 0 for n in names]
        pos = x - 0.4 + width * (k + 0.5)
        ax.bar(pos, s, width, fill=False, edgecolor="0.6", linewidth=0.8,
               label="#S" if k == 0 else None)
        bars = ax.bar(pos, pm, width, alpha=0.45, label=f"{label} #PM")
        ax.bar(pos, em, width, color=bars.patches[0].get_facecolor() if bars.patches else None,
               alpha=1.0, label=f"{label} #EM")
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_ylabel("sentences")
    if title:
        ax.set_title(title)
    if names:
        ax.legend(frameon=False, fontsize=8)
    _style(ax)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
