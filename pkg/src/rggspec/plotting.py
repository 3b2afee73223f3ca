"""Log-log convergence plots written as reproducible SVG."""

from __future__ import annotations

import io
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .output import atomic_write  # noqa: E402

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.figsize": (5.0, 3.8),
    "svg.hashsalt": "rggspec",
    "svg.fonttype": "path",
}


def _median_by(records, metric):
    data = defaultdict(lambda: defaultdict(list))
    for r in records:
        v = r[metric]
        if v is not None and np.isfinite(v) and v > 0:
            data[r["k"]][r["m"]].append(v)
    return {k: sorted((m, float(np.median(v))) for m, v in per_m.items())
            for k, per_m in sorted(data.items())}


def rate_plot_svg(records, metric: str = "rel_eig_err", title: str | None = None) -> bytes:
    """Median ``metric`` against ``3**-m``, one polyline per k, with a slope-1 guide."""
    series = _median_by(records, metric)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        xs_all = []
        for k, pts in series.items():
            x = [3.0 ** -m for m, _ in pts]
            y = [v for _, v in pts]
            xs_all.extend(x)
            ax.loglog(x, y, marker="o", label=f"k = {k}")
        if xs_all:
            lo, hi = min(xs_all), max(xs_all)
            anchor = max(v for pts in series.values() for _, v in pts)
            ref = np.array([lo, hi])
            ax.loglog(ref, anchor * ref / hi, "k--", lw=0.8, label="slope 1")
        ax.set_xlabel(r"$3^{-m}$")
        ax.set_ylabel(metric.replace("_", " "))
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        ax.grid(True, which="both", lw=0.3, alpha=0.5)
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def write_rate_plot(path, records, metric: str = "rel_eig_err", title: str | None = None):
    return atomic_write(path, rate_plot_svg(records, metric, title))
