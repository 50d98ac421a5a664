"""
Matplotlib figures for experiment outputs.

Every figure is drawn from the same arrays that go into the CSV files, so
the PNGs never show anything the data files do not.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_trajectories", "plot_aggregate", "plot_agent_sq_dist", "plot_comparison"]

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _positive(k, *series):
    # log axes drop round 0 and exact zeros
    keep = k > 0
    for s in series:
        keep &= s > 0
    return keep


def plot_trajectories(record, path, reference=None):
    """Each agent's iterate (first coordinate) against the round index."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for i in range(record.iterates.shape[1]):
            ax.plot(record.rounds, record.iterates[:, i, 0], lw=1.0, label=f"agent {i + 1}")
        if reference is not None:
            ax.axhline(float(np.ravel(reference)[0]), color="k", ls="--", lw=0.8, label="optimum")
        ax.set_xlabel("round k")
        ax.set_ylabel("iterate (coordinate 0)")
        ax.set_title(f"seed {record.seed}")
        ax.legend(ncol=2)
        return _save(fig, path)


def plot_aggregate(metrics, path):
    """Seed-mean squared distance and consensus error on log-log axes, with one-SE bands."""
    k = metrics.rounds.astype(float)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for mean, se, label in (
            (metrics.sq_dist, metrics.se_sq_dist, "sum of squared distances"),
            (metrics.consensus_error, metrics.se_consensus_error, "consensus error"),
        ):
            keep = _positive(k, mean)
            ax.loglog(k[keep], mean[keep], lw=1.2, label=label)
            lo = np.clip(mean - se, mean * 1e-3, None)
            ax.fill_between(k[keep], lo[keep], (mean + se)[keep], alpha=0.25)
        ax.set_xlabel("round k")
        ax.set_title(f"mean over {metrics.seeds} seed(s)")
        ax.legend()
        return _save(fig, path)


def plot_agent_sq_dist(metrics, path):
    """Seed-mean squared distance to the optimum, one curve per agent."""
    k = metrics.rounds.astype(float)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for i in range(metrics.agent_sq_dist.shape[1]):
            v = metrics.agent_sq_dist[:, i]
            keep = _positive(k, v)
            ax.loglog(k[keep], v[keep], lw=1.0, label=f"agent {i + 1}")
        ax.set_xlabel("round k")
        ax.set_ylabel("squared distance to optimum")
        ax.legend(ncol=2)
        return _save(fig, path)


def plot_comparison(rounds, a, b, path, labels=("a", "b")):
    k = np.asarray(rounds, dtype=float)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for v, label in ((np.asarray(a), labels[0]), (np.asarray(b), labels[1])):
            keep = _positive(k, v)
            ax.loglog(k[keep], v[keep], lw=1.2, label=label)
        ax.set_xlabel("round k")
        ax.set_ylabel("mean sum of squared distances")
        ax.legend()
        return _save(fig, path)
