"""Report figures (matplotlib, headless)."""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Ellipse  # noqa: E402

from .evaluation import covariance_ellipse  # noqa: E402
from .geom import Shape  # noqa: E402

COLORS = {"gnss": "0.55", "kf": "tab:blue", "imm": "tab:orange", "imm+map": "tab:green"}
SHAPE_COLORS = {Shape.STRAIGHT: "tab:blue", Shape.TRANSITIONAL_ARC: "tab:orange", Shape.CIRCULAR_ARC: "tab:red"}


def _save(fig, path, m: dict | None):
    meta = {"Software": None}
    if m is not None:
        meta["Description"] = json.dumps(m, sort_keys=True, separators=(",", ":"))
    fig.savefig(path, dpi=110, metadata=meta)
    plt.close(fig)


def plot_cdfs(reports: dict, path, m: dict | None = None) -> None:
    """Max / along-track / cross-track 3σ CDFs of every method."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4), sharey=True)
    for ax, ch, title in zip(axes, ("max", "along", "cross"), ("maximum 3σ", "along-track 3σ", "cross-track 3σ")):
        for name, rep in reports.items():
            tab = rep.cdfs[ch]
            if len(tab.values) == 0:
                continue
            x = np.concatenate([[tab.values[0]], tab.values])
            y = np.concatenate([[0.0], tab.probability])
            ax.step(x, y, where="post", color=COLORS.get(name), label=name)
        ax.set_xscale("log")
        ax.set_xlabel("error in m")
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
    axes[0].set_ylabel("CDF")
    axes[0].set_ylim(0.0, 1.02)
    axes[-1].legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path, m)


def plot_ellipses(logs: dict, path, window=None, every: int = 5, m: dict | None = None) -> None:
    """Positions with 3σ ellipses over a time window (default: whole run)."""
    fig, ax = plt.subplots(figsize=(7, 7))
    for name, log in logs.items():
        sel = log.available.copy()
        if window is not None:
            sel &= (log.t >= window[0]) & (log.t <= window[1])
        idx = np.flatnonzero(sel)
        if idx.size == 0:
            continue
        ax.plot(log.x[idx, 0], log.x[idx, 1], ".", ms=3, color=COLORS.get(name), label=name)
        if name == "gnss":
            continue
        for i in idx[::every]:
            a, b, ang, ok = covariance_ellipse(log.P[i, :2, :2])
            if ok:
                ax.add_patch(Ellipse((log.x[i, 0], log.x[i, 1]), 2 * a, 2 * b, angle=ang, fill=False,
                                     lw=0.8, color=COLORS.get(name)))
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("east in m")
    ax.set_ylabel("north in m")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path, m)


def plot_map(maps: dict, path, frame=None, reference_xy=None, trace_xy=None, m: dict | None = None) -> None:
    """Track maps coloured by element shape; the first map gets the colours."""
    fig, ax = plt.subplots(figsize=(8, 7))
    if trace_xy is not None:
        ax.plot(trace_xy[:, 0], trace_xy[:, 1], ".", ms=2, color="0.7", label="trace")
    if reference_xy is not None:
        ax.plot(reference_xy[:, 0], reference_xy[:, 1], "-", lw=3, color="0.85", label="reference")
    for n, (name, track) in enumerate(maps.items()):
        chain = track.chain(frame)
        if n == 0:
            for i, e in enumerate(chain.elements):
                st = np.linspace(chain.stations[i], chain.stations[i + 1], max(int(e.length), 2))
                x, y, _, _ = chain.evaluate(st)
                ax.plot(x, y, "-", lw=1.6, color=SHAPE_COLORS[e.shape])
            ax.plot([], [], "-", color="k", label=f"{name} (st/ta/ca: blue/orange/red)")
        else:
            _, x, y, _, _ = chain.sample(2.0)
            ax.plot(x, y, "--", lw=1.0, label=name)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("east in m")
    ax.set_ylabel("north in m")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path, m)


def plot_map_error(stats, path, m: dict | None = None) -> None:
    """Empirical CDF of the absolute map error."""
    v = np.sort(stats.samples)
    p = np.arange(1, len(v) + 1) / len(v)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(v, p, where="post")
    ax.axvline(stats.mean, color="k", ls=":", label=f"mean {stats.mean:.2f} m")
    ax.set_xlabel("|ε| in m")
    ax.set_ylabel("CDF")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path, m)


def plot_probabilities(log, events, path, m: dict | None = None) -> None:
    """IMM model probabilities with the classified segments shaded."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(11, 5), sharex=True)
    for k, name in enumerate(("straight", "arc", "unconstrained")):
        ax0.plot(log.t, log.mu[:, k], lw=0.9, label=name)
    for e in events:
        if e.shape is not None:
            ax0.axvspan(e.t, e.closing_t, color=SHAPE_COLORS[e.shape], alpha=0.12)
    ax0.set_ylabel("μ")
    ax0.legend(loc="upper right", fontsize=8)
    ax1.plot(log.t, log.x[:, 4], lw=0.9, color="k")
    ax1.set_ylabel("ω in rad/s")
    ax1.set_xlabel("t in s")
    for ax in (ax0, ax1):
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path, m)
