"""Deterministic SVG figures (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "channel-stab"
matplotlib.rcParams["svg.fonttype"] = "none"


def _save(fig, path: Path | str) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def loglog_lines(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], path, xlabel: str, ylabel: str,
                 title: str = "", reference: tuple[float, float, float] | None = None) -> Path:
    """One log-log polyline per entry; ``reference=(slope, x0, y0)`` adds a dashed guide line."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    xs_all = []
    for label, (xs, ys) in series.items():
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        keep = (xs > 0) & (ys > 0) & np.isfinite(ys)
        if keep.any():
            ax.loglog(xs[keep], ys[keep], "o-", label=label)
            xs_all.extend(xs[keep])
    if reference is not None and xs_all:
        slope, x0, y0 = reference
        xr = np.array([min(xs_all), max(xs_all)])
        ax.loglog(xr, y0 * (xr / x0) ** slope, "k--", lw=1, label=f"slope {slope:.3g}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if xs_all:
        ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def semilog_curves(curves: Mapping[str, tuple[Sequence[float], Sequence[float]]], path, xlabel: str, ylabel: str,
                   title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for label, (xs, ys) in curves.items():
        ys = np.asarray(ys, float)
        keep = ys > 0
        ax.semilogy(np.asarray(xs, float)[keep], ys[keep], label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if curves:
        ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def stacked_bars(labels: Sequence[str], parts: Mapping[str, Sequence[float]], path, ylabel: str,
                 title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    bottom = np.zeros(len(labels))
    x = np.arange(len(labels))
    for name, vals in parts.items():
        vals = np.asarray(vals, float)
        ax.bar(x, vals, bottom=bottom, label=name)
        bottom += vals
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
