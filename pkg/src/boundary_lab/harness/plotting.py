"""Line charts written as SVG with reproducible bytes."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "svg.hashsalt": "boundary-lab",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.4),
}


def line_chart(path: Path, x, series: dict, *, xlabel: str, ylabel: str, title: str = "",
               logx: bool = False, logy: bool = False, bands: dict | None = None) -> Path:
    """One line per entry of ``series``; ``bands`` maps a name to (lower, upper)."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for name, ys in series.items():
            ax.plot(x, ys, marker="o", ms=3, lw=1.2, label=name)
            if bands and name in bands:
                lo, hi = bands[name]
                ax.fill_between(x, lo, hi, alpha=0.2, lw=0)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
