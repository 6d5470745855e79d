"""Figures for convergence sequences."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .solve import SequenceResult  # noqa: E402

PANELS = (("min_energy", "minimal energy"), ("sup_dis", "sup Dis dF"), ("mean_dis", "mean Dis dF"),
          ("minimizer_lp_dist", "L^p distance to limit minimizer"))


def plot_sequence(result: SequenceResult, path, title: str = "") -> Path:
    """Log-log panels of the sequence columns against ``n``; written with fixed metadata."""
    path = Path(path)
    n = result.column("n")
    fig, axes = plt.subplots(1, len(PANELS), figsize=(4 * len(PANELS), 3.4), constrained_layout=True)
    for ax, (col, label) in zip(axes, PANELS):
        y = result.column(col)
        pos = [(a, b) for a, b in zip(n, y) if b > 0]
        if pos:
            ax.loglog(*zip(*pos), "o-", base=2)
        ax.set_xlabel("n")
        ax.set_title(label, fontsize=10)
        ax.grid(True, which="both", alpha=0.3)
    if title:
        fig.suptitle(title)
    fmt = path.suffix.lstrip(".").lower() or "png"
    meta = {"Software": None} if fmt == "png" else {"Creator": None, "Producer": None, "CreationDate": None}
    fig.savefig(path, format=fmt, dpi=110, metadata=meta if fmt in ("png", "pdf") else None)
    plt.close(fig)
    return path
