"""Heatmap rendering for phase grids (PNG next to grid.csv / grid.pgm)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import PhaseGrid  # noqa: E402


def plot_phase_grid(pg: PhaseGrid, path, title: str | None = None, dim_label: str = "K"):
    """Write a mean-rMSE heatmap; rows are ``dim`` values, columns are ``M``.

    The top axis repeats the columns as ``gamma = M / NL``.
    """
    means = np.minimum(pg.mean_matrix(), 1.0)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * len(pg.axis_M), 1.0 + 0.5 * len(pg.axis_dim)))
    im = ax.imshow(means, origin="lower", cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(pg.axis_M)))
    ax.set_xticklabels([str(m) for m in pg.axis_M])
    ax.set_yticks(range(len(pg.axis_dim)))
    ax.set_yticklabels([str(d) for d in pg.axis_dim])
    ax.set_xlabel("M (nodes)")
    ax.set_ylabel(dim_label)
    gammas = [pg.cell(0, j).gamma for j in range(len(pg.axis_M))]
    top = ax.secondary_xaxis("top")
    top.set_xticks(range(len(pg.axis_M)))
    top.set_xticklabels([f"{g:.2g}" for g in gammas])
    top.set_xlabel(r"$\gamma = M/NL$")
    for i in range(len(pg.axis_dim)):
        for j in range(len(pg.axis_M)):
            if pg.cell(i, j).flagged:
                ax.text(j, i, "x", ha="center", va="center", color="red")
    fig.colorbar(im, ax=ax, label="mean rMSE")
    if title:
        ax.set_title(title, pad=28)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
