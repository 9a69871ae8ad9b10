"""Band figures rendered next to the CSV reports.

One figure per (example, sample size, mode): the truth curve plus, for each
estimator, the mean fitted curve and its shaded central 95% band over the
evaluation grid.  Rendering uses the non-interactive Agg backend so the run
command works headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

if TYPE_CHECKING:  # pragma: no cover
    from .experiments import ExperimentReport

_COLORS = {
    "naive": "tab:gray",
    "rr": "tab:orange",
    "rr-ridge": "tab:red",
    "tsr": "tab:blue",
    "tsr-ridge": "tab:purple",
}


def render_band_figure(report: "ExperimentReport", n: int, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    truth_drawn = False
    for name in report.config.estimators:
        band = report.bands.get((name, n))
        if band is None:
            continue
        color = _COLORS.get(name, "tab:green")
        ax.fill_between(band.x, band.lower, band.upper, color=color, alpha=0.18, lw=0)
        ax.plot(band.x, band.mean, color=color, lw=1.4, label=name)
        if not truth_drawn:
            ax.plot(band.x, band.truth, color="black", lw=1.2, ls="--",
                    label="interventional truth")
            truth_drawn = True
    ax.set_xlabel("x")
    ax.set_ylabel("estimated E[Y | do(X=x)]")
    ax.set_title(f"{report.example}  (n={n}, {report.mode.value})")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out
