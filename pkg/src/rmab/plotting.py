"""Render aggregate reward curves to image files next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .sim import AggregateSeries


def plot_reward_curves(
    series_by_policy: dict[str, AggregateSeries],
    instance_name: str,
    path: str | Path,
    dpi: int = 150,
) -> Path:
    """One figure per instance: per-policy moving-average reward with stderr band."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for policy_name, series in series_by_policy.items():
        t = range(1, series.mean.size + 1)
        (line,) = ax.plot(t, series.moving_avg, label=policy_name, linewidth=1.2)
        ax.fill_between(
            t,
            series.moving_avg - series.stderr,
            series.moving_avg + series.stderr,
            color=line.get_color(),
            alpha=0.15,
            linewidth=0,
        )
    ax.set_xlabel("step")
    ax.set_ylabel("total reward per step")
    ax.set_title(instance_name)
    ax.legend(loc="best", fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path
