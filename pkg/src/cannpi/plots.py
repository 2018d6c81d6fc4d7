"""Static SVG figures with paired CSV data.

Output is byte-deterministic: the SVG id salt is fixed and the date
metadata is dropped.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cann import AxisReduction, reconstruct_bump  # noqa: E402
from .evaluation import Trajectory  # noqa: E402

_RC = {"svg.hashsalt": "cannpi", "svg.fonttype": "path", "path.simplify": False}


def _save(fig, path) -> Path:
    path = Path(path)
    if not path.parent.is_dir():
        plt.close(fig)
        raise OSError(f"output directory {path.parent} does not exist")
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def trajectory_overlay(trajs: dict[str, Trajectory], path, title: str = "top-down view") -> tuple[Path, Path]:
    """XY overlay of several trajectories; writes ``path`` (SVG) and ``path`` with a .csv suffix."""
    if not trajs or any(len(t) == 0 for t in trajs.values()):
        raise ValueError("trajectories must be non-empty")
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        for name, t in trajs.items():
            ax.plot(t.xyz[:, 0], t.xyz[:, 1], label=name, linewidth=1.2)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_title(title)
        ax.legend()
        svg = _save(fig, path)
    csv_path = svg.with_suffix(".csv")
    n = max(len(t) for t in trajs.values())
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row"] + [f"{name}_{c}" for name in trajs for c in ("frame", "x", "y")])
        for i in range(n):
            row = [i]
            for t in trajs.values():
                row += [int(t.frame[i]), repr(float(t.xyz[i, 0])), repr(float(t.xyz[i, 1]))] if i < len(t) else ["", "", ""]
            w.writerow(row)
    return svg, csv_path


def bump_heatmap(activity, path, title: str = "bump over time") -> Path:
    """Heatmap of a ring's activity, neurons on the vertical axis and frames horizontally."""
    a = np.asarray(activity, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise ValueError("activity must be a non-empty (frames, neurons) array")
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3))
        im = ax.imshow(a.T, aspect="auto", origin="lower", interpolation="nearest", cmap="viridis")
        ax.set_xlabel("frame")
        ax.set_ylabel("neuron")
        ax.set_title(title)
        fig.colorbar(im, ax=ax)
        return _save(fig, path)


def bump_slices(red: AxisReduction, path, title: str = "reconstructed bump") -> Path:
    """Central slices of the bump rebuilt from its axis sums, one panel per axis pair."""
    vol = reconstruct_bump(red)
    ix, iy, iz = (int(np.argmax(s)) for s in red)
    panels = [("x-y", vol[:, :, iz]), ("x-z", vol[:, iy, :]), ("y-z", vol[ix, :, :])]
    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(1, 3, figsize=(9, 3))
        for ax, (name, img) in zip(axes, panels):
            ax.imshow(img.T, origin="lower", interpolation="nearest", cmap="viridis")
            ax.set_title(name)
        fig.suptitle(title)
        return _save(fig, path)
