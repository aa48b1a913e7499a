"""SVG figures for ensemble output, each carrying its source table as an XML comment."""
from __future__ import annotations

import io
import math
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

import numpy as np  # noqa: E402

from .ensemble import CURRENCY_COLORS, EnsembleStats, Snapshot, read_table_csv  # noqa: E402
from .simcore import US, Currency  # noqa: E402

DATA_OPEN = "<!-- reserve-shift-data"
DATA_CLOSE = "-->"

golden_mean = (math.sqrt(5) - 1.0) / 2.0
fig_width = 6.4
STYLE = {
    "axes.labelsize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (fig_width, fig_width * golden_mean),
    "lines.linewidth": 1.2,
    "axes.spines.top": False,
    "axes.spines.right": False,
    # fixed ids and no timestamp keep the files byte-identical across runs
    "svg.hashsalt": "reserve-shift",
    "svg.fonttype": "none",
}


def _svg(fig, table: Optional[str]) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    svg = buf.getvalue()
    if table is None:
        return svg
    if "--" in table:
        raise ValueError("table text cannot be embedded in an XML comment")
    end = svg.rindex("</svg>")
    return f"{svg[:end]}{DATA_OPEN}\n{table}{DATA_CLOSE}\n{svg[end:]}"


def embedded_table(svg_text: str) -> str:
    """Return the CSV block stored in an SVG written by this module."""
    start = svg_text.index(DATA_OPEN) + len(DATA_OPEN) + 1
    return svg_text[start:svg_text.index(DATA_CLOSE, start)]


def embedded_series(svg_text: str) -> dict[str, np.ndarray]:
    return read_table_csv(embedded_table(svg_text))


def _months_since_trigger(stats: EnsembleStats) -> tuple[np.ndarray, str]:
    months = stats.mean["month"]
    triggers = [t for t in stats.triggers if t is not None]
    if triggers and len(set(triggers)) == 1:
        return months - triggers[0], "months since trigger"
    return months, "month"


def dedollarization_figure(stats: EnsembleStats) -> str:
    """Mean dedollarization with a one-sd band, and effective inflation on a twin axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x, xlabel = _months_since_trigger(stats)
        m, s = stats.mean["mean_d"], stats.std["mean_d"]
        ax.plot(x, m, color="black", label="mean dedollarization")
        ax.fill_between(x, m - s, m + s, color="0.8", linewidth=0)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("dedollarization $\\bar d$")
        ax.set_ylim(bottom=0)
        infl = ax.twinx()
        infl.spines["right"].set_visible(True)
        infl.plot(x, 100 * stats.mean["inflation"], color="tab:orange", label="effective inflation")
        infl.set_ylabel("inflation (%)")
        lines = ax.get_lines()[:1] + infl.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="upper left", frameon=False)
        ax.set_title(f"{stats.runs} runs, seed {stats.master_seed}")
        fig.tight_layout()
        return _svg(fig, stats.to_csv())


def shares_figure(stats: EnsembleStats) -> str:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x, xlabel = _months_since_trigger(stats)
        for cur in Currency:
            key = f"share_{cur.name.lower()}"
            m, s = stats.mean[key], stats.std[key]
            color = CURRENCY_COLORS[cur]
            ax.plot(x, m, color=color, label=cur.name)
            ax.fill_between(x, m - s, m + s, color=color, alpha=0.15, linewidth=0)
        ax.set_ylim(0, 1)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("share of countries")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _svg(fig, stats.to_csv())


def network_figure(snap: Snapshot) -> str:
    """Hub at the centre, other nodes on a ring in id order, coloured by currency."""
    n = snap.graph.n
    angle = 2 * np.pi * np.arange(n) / max(n - 1, 1)
    pos = np.column_stack([np.cos(angle), np.sin(angle)])
    pos[US] = 0.0
    peer_edges = [(i, j) for i, j in snap.graph.edges() if US not in (i, j)]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(fig_width, fig_width))
        ax.add_collection(LineCollection([pos[[i, j]] for i, j in peer_edges],
                                         colors="0.75", linewidths=0.3))
        colors = [CURRENCY_COLORS[Currency(int(c))] for c in snap.currency]
        ax.scatter(pos[:, 0], pos[:, 1], s=12 + 40 * snap.d, c=colors, zorder=2)
        ax.set_aspect("equal")
        ax.axis("off")
        ax.set_title(f"month {snap.month}; spokes to the hub omitted")
        fig.tight_layout()
        return _svg(fig, None)


def write_ensemble_figures(stats: EnsembleStats, out_dir) -> list[Path]:
    out = Path(out_dir)
    paths = []
    for name, render in (("dedollarization.svg", dedollarization_figure),
                         ("shares.svg", shares_figure)):
        path = out / name
        path.write_text(render(stats))
        paths.append(path)
    return paths
