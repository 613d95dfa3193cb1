"""Report figures written next to the CSV outputs.

Uses the non-interactive Agg backend and strips the timestamp/software
metadata so repeated runs produce identical PNG files.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "svg.hashsalt": "clipflow",
}
_PNG_META = {"Software": None}


@contextmanager
def report_style():
    with plt.rc_context(_STYLE):
        yield


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_convergence(ns, distances, path, t: float = 1.0) -> Path:
    """d_n against n on log-log axes with a first-order guide line."""
    with report_style():
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        ns = np.asarray(ns, dtype=float)
        ds = np.asarray(distances, dtype=float)
        pos = ds > 0
        if pos.any():
            ax.loglog(ns[pos], ds[pos], "o-", label=r"$d_n$")
            n0, d0 = ns[pos][0], ds[pos][0]
            ax.loglog(ns[pos], d0 * n0 / ns[pos], "k--", lw=0.8, label="order 1")
            ax.legend()
        else:
            ax.plot(ns, ds, "o-")
            ax.text(0.5, 0.5, "all distances are 0", transform=ax.transAxes, ha="center")
            ax.set_xscale("log", base=2)
        ax.set_xlabel("Euler steps n")
        ax.set_ylabel(r"sup distance $n \to 2n$")
        ax.set_title(f"Euler refinement at t = {t:g}")
        fig.tight_layout()
        return _save(fig, path)


def plot_tangency(rows, path, t: float = 0.5) -> Path:
    with report_style():
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        hs = np.array([h for h, _ in rows])
        rs = np.array([r for _, r in rows])
        if np.all(rs > 0):
            ax.loglog(hs, rs, "s-")
        else:
            ax.semilogx(hs, rs, "s-")
        ax.set_xlabel("h")
        ax.set_ylabel("tangency residual")
        ax.set_title(f"Tangency at t = {t:g}")
        fig.tight_layout()
        return _save(fig, path)


def plot_metrics(rows, channel_names, path) -> Path:
    """Mass per channel and step-to-step sup change over time."""
    with report_style():
        fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(5, 4.6), sharex=True)
        time = [r["time"] for r in rows]
        for name in channel_names:
            ax0.plot(time, [r[f"mass_{name}"] for r in rows], label=name)
        ax0.set_ylabel("mass")
        ax0.legend()
        change = [r["sup_change"] for r in rows[1:]]
        if change:
            ax1.plot(time[1:], change, color="C3")
        ax1.set_xlabel("time")
        ax1.set_ylabel("sup change per step")
        fig.tight_layout()
        return _save(fig, path)


def plot_state(state, channel_names, path, title: str = "") -> Path:
    """One image panel per channel, scaled to the channel bounds."""
    chans = list(state)
    with report_style():
        fig, axes = plt.subplots(1, len(chans), figsize=(3.2 * len(chans), 3.2), squeeze=False)
        for ax, ch, name in zip(axes[0], chans, channel_names):
            lo, hi = ch.bounds.lower, ch.bounds.upper
            if not (math.isfinite(lo) and math.isfinite(hi)):
                lo, hi = float(ch.values.min()), float(ch.values.max())
            ax.imshow(ch.values, vmin=lo, vmax=hi, cmap="viridis", interpolation="nearest")
            ax.set_title(name)
            ax.set_xticks([])
            ax.set_yticks([])
            ax.grid(False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, path)
