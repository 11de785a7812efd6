"""Figures for a finished run: where the cycles went, and how CPI settled."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .golden import RetireEvent  # noqa: E402
from .stats import StatsReport  # noqa: E402


class CpiRecorder:
    """Retirement listener keeping (instructions, cycle) samples for the CPI curve."""

    def __init__(self, every: int = 1):
        self.every = max(1, every)
        self.count = 0
        self.samples: list[tuple[int, int]] = []

    def __call__(self, ev: RetireEvent) -> None:
        self.count += 1
        if self.count % self.every == 0:
            self.samples.append((self.count, ev.cycle))


def cycle_breakdown(stats: StatsReport) -> dict[str, int]:
    if stats.core != "pipeline":
        return {"retire": stats.instructions}
    return {
        "retire": stats.instructions,
        "fill": 4 if stats.instructions else 0,
        "load-use": stats.stall_load_use,
        "flush": stats.stall_flush,
        "trap redirect": stats.stall_trap_redirect,
        "smc": stats.stall_smc,
    }


def render(stats: StatsReport, samples: list[tuple[int, int]], path: str | Path) -> Path:
    path = Path(path)
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))

    parts = cycle_breakdown(stats)
    names = list(parts)
    left.barh(names, [parts[n] for n in names], color="tab:blue")
    left.invert_yaxis()
    left.set_xlabel("cycles")
    left.set_title(f"{stats.core}: {stats.cycles} cycles")
    for y, n in enumerate(names):
        left.annotate(str(parts[n]), (parts[n], y), xytext=(3, 0),
                      textcoords="offset points", va="center", fontsize=8)

    if samples:
        xs = [n for n, _ in samples]
        ys = [c / n for n, c in samples]
        right.plot(xs, ys, lw=1)
        right.axhline(ys[-1], color="0.6", ls=":", lw=1)
    right.set_xlabel("instructions retired")
    right.set_ylabel("cumulative CPI")
    right.set_title(f"CPI {stats.cpi:.3f}")

    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
