"""Figure settings and report figures.

Figures are written as SVG with a fixed hash salt and no date stamp so
that identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

golden_mean = (5 ** 0.5 - 1.0) / 2.0
fig_width = 7.0
colors = ["#1f4e79", "#c55a11", "#548235", "#7f6000", "#7030a0"]

params = {
    "axes.prop_cycle": matplotlib.cycler(color=colors),
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "axes.linewidth": 0.6,
    "font.family": "sans-serif",
    "font.sans-serif": ["DejaVu Sans"],
    "font.size": 8,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 100,
    "svg.fonttype": "path",
    "svg.hashsalt": "sentitrade",
    "path.simplify": False,
}


def style() -> matplotlib.rc_context:
    """Context manager applying the package figure settings."""
    return matplotlib.rc_context(params)


def equity_figure(model_curve: Sequence[float], baseline_curve: Sequence[float], title: str = "Cumulative pnl"):
    """Model and random-baseline cumulative pnl over the traded windows."""
    with style():
        fig, ax = plt.subplots()
        x = range(1, len(model_curve) + 1)
        ax.plot(x, list(model_curve), label="model")
        ax.plot(x, list(baseline_curve), label="random baseline (mean)", linestyle="--")
        ax.axhline(0.0, color="0.6", linewidth=0.5)
        ax.set_xlabel("trade")
        ax.set_ylabel("cumulative pnl")
        ax.set_title(title)
        ax.legend(loc="upper left")
        fig.tight_layout()
    return fig


def polarity_figure(distribution: Mapping[str, Mapping[str, int]]):
    """Stacked negative / neutral / positive shares per scorer."""
    names = list(distribution)
    with style():
        fig, ax = plt.subplots()
        bottom = [0.0] * len(names)
        for key, label, color in zip(("-1", "0", "1"), ("negative", "neutral", "positive"), colors):
            shares = []
            for n in names:
                d = distribution[n]
                total = sum(d.values()) or 1
                shares.append(d.get(key, 0) / total)
            ax.bar(names, shares, bottom=bottom, label=label, color=color)
            bottom = [b + s for b, s in zip(bottom, shares)]
        ax.set_ylabel("share of tweets")
        ax.set_ylim(0, 1)
        ax.legend(loc="upper right")
        fig.tight_layout()
    return fig


def save_svg(fig, path: Path, description: str = "") -> None:
    """Write ``fig`` as a reproducible SVG and close it."""
    with style():
        fig.savefig(path, format="svg", metadata={"Date": None, "Description": description or None})
    plt.close(fig)
