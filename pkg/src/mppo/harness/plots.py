"""Figures rendered from the CSV artifacts.  The CSVs stay the source of truth."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.0),
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "font.size": 8,
    "axes.labelsize": 8,
    "legend.fontsize": 6,
    "lines.linewidth": 1.0,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _read(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def learning_curves(curves_csv: str | Path, out_png: str | Path) -> Path:
    """Mean evaluation return per tag with its 75% band."""
    series = defaultdict(list)
    for row in _read(Path(curves_csv)):
        series[row["tag"]].append((int(row["env_steps"]), float(row["mean_return"]), float(row["ci75_half_width"])))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for tag, pts in series.items():
            s, m, h = (np.array(c) for c in zip(*sorted(pts)))
            ax.plot(s, m, label=tag)
            ax.fill_between(s, m - h, m + h, alpha=0.2)
        ax.set_xlabel("environment steps")
        ax.set_ylabel("mean evaluation return")
        ax.legend(frameon=False)
        fig.savefig(out_png)
        plt.close(fig)
    return Path(out_png)


def heatmap_grid(heatmap_csv: str | Path) -> np.ndarray:
    rows = _read(Path(heatmap_csv))
    n_r = max(int(r["row"]) for r in rows) + 1
    n_c = max(int(r["col"]) for r in rows) + 1
    grid = np.zeros((n_r, n_c), dtype=np.int64)
    for r in rows:
        grid[int(r["row"]), int(r["col"])] = int(r["count"])
    return grid


def heatmap(heatmap_csv: str | Path, out_png: str | Path, title: str = "") -> Path:
    """Log-scaled visitation counts; brighter cells were visited more often."""
    grid = heatmap_grid(heatmap_csv)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.2, 3.0))
        im = ax.imshow(np.log1p(grid), cmap="magma", origin="upper")
        ax.set_xticks([])
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        fig.colorbar(im, ax=ax, label="log(1 + visits)")
        fig.savefig(out_png)
        plt.close(fig)
    return Path(out_png)


def pick_trace(buffer_csv: str | Path, out_png: str | Path) -> Path:
    """Picked buffer index against iteration."""
    rows = _read(Path(buffer_csv))
    it = [int(r["iteration"]) for r in rows]
    picked = [int(r["picked"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 1.8))
        ax.plot(it, picked, ".", markersize=2)
        ax.set_xlabel("iteration")
        ax.set_ylabel("picked index")
        fig.savefig(out_png)
        plt.close(fig)
    return Path(out_png)
