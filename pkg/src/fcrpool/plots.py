"""Optional SVG charts (needs matplotlib)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from fcrpool.market import DesignComparison
from fcrpool.pool import DayBands
from fcrpool.profiles import SLOTS_PER_HOUR


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "fcrpool"
    import matplotlib.pyplot as plt

    return plt


def bands_svg(bands: DayBands, rated_power: float, path: str | Path) -> None:
    """Median and 50/75/100 % bands of pool power over the day, relative to rated power."""
    plt = _pyplot()
    hours = np.arange(len(bands.median)) / SLOTS_PER_HOUR
    fig, ax = plt.subplots(figsize=(8, 4))
    for lo, hi, alpha, label in (
        (bands.lo100, bands.hi100, 0.15, "100 %"),
        (bands.lo75, bands.hi75, 0.25, "75 %"),
        (bands.lo50, bands.hi50, 0.4, "50 %"),
    ):
        ax.fill_between(hours, lo / rated_power, hi / rated_power, step="post", alpha=alpha, color="C0", label=label)
    ax.step(hours, bands.median / rated_power, where="post", color="C0", label="median")
    ax.set(xlabel="time of day [h]", ylabel="pool power / rated power", xlim=(0, 24), ylim=(0, 1))
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def compare_svg(comparison: DesignComparison, path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    weekly = [r.weekly for r in comparison.reports]
    ax.bar(comparison.names, weekly, color="C1")
    ax.set(ylabel="revenue [EUR/week]")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
