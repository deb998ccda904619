"""Report figures written next to the CSV tables they are drawn from."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SIDE_LABEL = {"L": "Left departures", "R": "Right departures"}
ARM_COLOR = {"uncontrolled": "tab:blue", "controlled": "tab:red"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_area_bars(summary: dict, path):
    """Mean departure area per side and arm with one-standard-deviation bars."""
    sides = [s for s in ("L", "R") if s in summary and summary[s]["comparison_defined"]]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    width = 0.35
    x = np.arange(len(sides))
    for i, arm in enumerate(("uncontrolled", "controlled")):
        means = [summary[s][f"mean_S_{arm}"] for s in sides]
        stds = [summary[s][f"std_S_{arm}"] for s in sides]
        ax.bar(x + (i - 0.5) * width, means, width, color=ARM_COLOR[arm], alpha=0.8, label=arm)
        ax.errorbar(x + (i - 0.5) * width, means, yerr=stds, fmt="none", ecolor="k", capsize=4)
    ax.set_xticks(x)
    ax.set_xticklabels([SIDE_LABEL[s] for s in sides])
    ax.set_ylabel("departure area S (m s)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_sweep(rows: list[dict], path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
    for ax, side in zip(axes, ("L", "R")):
        for arm in ("uncontrolled", "controlled"):
            sel = [r for r in rows if r["side"] == side and r["arm"] == arm and r["mean_S"] is not None]
            if not sel:
                continue
            n = np.array([r["n"] for r in sel])
            mean = np.array([r["mean_S"] for r in sel])
            std = np.array([r["std_S"] for r in sel])
            ax.plot(n, mean, "o-", color=ARM_COLOR[arm], label=arm)
            ax.fill_between(n, mean - std, mean + std, color=ARM_COLOR[arm], alpha=0.15)
        ax.set_title(SIDE_LABEL[side])
        ax.set_xlabel("generated events per side")
    axes[0].set_ylabel("S mean +/- std (m s)")
    axes[0].legend(frameon=False)
    return _save(fig, path)


def plot_bic_curve(curve, path, title: str = ""):
    ks = [p.K for p in curve if np.isfinite(p.bic)]
    vals = [p.bic for p in curve if np.isfinite(p.bic)]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, vals, "o-", color="k")
    if vals:
        best = int(np.argmin(vals))
        ax.plot(ks[best], vals[best], "o", color="tab:red", ms=10, mfc="none")
    ax.set_xlabel("number of components K")
    ax.set_ylabel("BIC")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_trajectories(pairs, path, lane_half_width: float | None = None):
    """Overlay recorded and controlled offsets after the trigger.

    ``pairs`` is an iterable of :class:`~ldceval.controller.ControlledTrajectory`.
    """
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labeled = False
    for traj in pairs:
        if not traj.triggered:
            continue
        tt = traj.t - traj.t[0]
        ax.plot(tt, traj.e_y_uncontrolled, color=ARM_COLOR["uncontrolled"], lw=1,
                label=None if labeled else "without controller")
        ax.plot(tt, traj.e_y, "--", color=ARM_COLOR["controlled"], lw=1,
                label=None if labeled else "with controller")
        labeled = True
    ax.axhline(0.0, color="k", ls=":", lw=0.8)
    if lane_half_width is not None:
        for sgn in (-1, 1):
            ax.axhline(sgn * lane_half_width, color="k", lw=0.8)
    ax.set_xlabel("time since trigger (s)")
    ax.set_ylabel("e_y (m)")
    ax.legend(frameon=False)
    return _save(fig, path)
