"""Static convergence figures.

Plots are a courtesy rendering of the CSV traces: a missing or broken
matplotlib must never fail a run, so everything here is wrapped by the caller.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_convergence", "plot_comparison"]


def _median_curve(traces):
    """Median convergence error per round across seeds, plus the x-axes."""
    errors = np.array([[row.conv_error for row in t.rows] for t in traces])
    rounds = np.array([row.round_index for row in traces[0].rows])
    queries = np.median(
        np.array([[row.cum_queries for row in t.rows] for t in traces]), axis=0
    )
    return rounds, queries, np.median(errors, axis=0)


def plot_convergence(traces, algorithm: str, path) -> None:
    """Median error vs rounds and vs cumulative queries for one algorithm."""
    if any(row.conv_error is None for t in traces for row in t.rows):
        return
    rounds, queries, med = _median_curve(traces)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, x, xlabel in ((axes[0], rounds, "round"), (axes[1], queries, "cumulative queries")):
        ax.plot(x, med, marker=".", label=algorithm)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("convergence error")
        ax.set_yscale("log")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_comparison(traces_by_algorithm: dict, path) -> None:
    """Overlay the median curves of several algorithms on shared axes."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for algorithm, traces in traces_by_algorithm.items():
        if any(row.conv_error is None for t in traces for row in t.rows):
            continue
        rounds, queries, med = _median_curve(traces)
        axes[0].plot(rounds, med, marker=".", label=algorithm)
        axes[1].plot(queries, med, marker=".", label=algorithm)
    for ax, xlabel in ((axes[0], "round"), (axes[1], "cumulative queries")):
        ax.set_xlabel(xlabel)
        ax.set_ylabel("convergence error")
        ax.set_yscale("log")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
