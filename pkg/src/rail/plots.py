"""Result-curve rendering.

Each labeled series aggregates several trials of one configuration: solid
line at the pointwise mean, shaded band spanning the pointwise min/max, a
horizontal reference line at expert-level return, interactions on the x
axis. The aggregated numbers are also written as a delimited text table so
the figure can be reproduced or re-styled without re-running anything.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .engine import TrialMetrics


class PlotDataError(ValueError):
    """Series data is empty or unusable."""


def _trial_curve(metrics: TrialMetrics) -> tuple[np.ndarray, np.ndarray]:
    if metrics.failed or not metrics.records:
        raise PlotDataError(f"trial seed={metrics.seed} has no usable records")
    xs = np.array([r.env_steps for r in metrics.records], dtype=np.float64)
    ys = np.array([r.eval_mean_return for r in metrics.records], dtype=np.float64)
    return xs, ys


def aggregate_series(trials: list[TrialMetrics]) -> dict:
    """Pointwise mean/min/max across trials on a common evaluation grid.

    Trials evaluated on different grids are linearly resampled onto the
    coarsest grid present, clipped to the overlapping range, with a warning.
    """
    curves = [_trial_curve(m) for m in trials if not m.failed and m.records]
    if not curves:
        raise PlotDataError("series has no successful trials")
    grids = [xs for xs, _ in curves]
    same = all(len(g) == len(grids[0]) and np.array_equal(g, grids[0]) for g in grids)
    if same:
        grid = grids[0]
        values = np.stack([ys for _, ys in curves])
    else:
        warnings.warn("trials have mismatched evaluation grids; resampling to the coarsest")
        coarsest = max(grids, key=lambda g: np.min(np.diff(g)) if len(g) > 1 else np.inf)
        lo = max(g[0] for g in grids)
        hi = min(g[-1] for g in grids)
        grid = coarsest[(coarsest >= lo) & (coarsest <= hi)]
        if len(grid) == 0:
            raise PlotDataError("evaluation grids do not overlap")
        values = np.stack([np.interp(grid, xs, ys) for xs, ys in curves])
    return {
        "env_steps": grid,
        "mean": values.mean(axis=0),
        "min": values.min(axis=0),
        "max": values.max(axis=0),
        "n_trials": len(curves),
    }


def write_data_table(series: dict[str, dict], path) -> None:
    """Delimited text table of the aggregated curves (exact repr values)."""
    with open(path, "w") as fh:
        fh.write("series\tenv_steps\tmean\tmin\tmax\n")
        for label in sorted(series):
            agg = series[label]
            for i in range(len(agg["env_steps"])):
                fh.write(
                    f"{label}\t{int(agg['env_steps'][i])}\t"
                    f"{float(agg['mean'][i])!r}\t{float(agg['min'][i])!r}\t"
                    f"{float(agg['max'][i])!r}\n"
                )


def emit_plot(
    series_trials: dict[str, list[TrialMetrics]],
    out_path,
    expert_return: float | None = None,
    title: str | None = None,
) -> tuple[Path, Path]:
    """Render the comparison figure and its data table.

    Returns (figure_path, table_path). The table lands next to the figure
    with a .tsv suffix. When expert_return is None it is taken from the
    first series that recorded one.
    """
    if not series_trials:
        raise PlotDataError("nothing to plot")
    series = {label: aggregate_series(trials) for label, trials in series_trials.items()}
    if expert_return is None:
        for trials in series_trials.values():
            for m in trials:
                if m.expert_mean_return:
                    expert_return = m.expert_mean_return
                    break
            if expert_return is not None:
                break

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label in sorted(series):
        agg = series[label]
        (line,) = ax.plot(agg["env_steps"], agg["mean"], label=f"{label} (n={agg['n_trials']})")
        ax.fill_between(agg["env_steps"], agg["min"], agg["max"], alpha=0.2,
                        color=line.get_color(), linewidth=0)
    if expert_return is not None:
        ax.axhline(expert_return, color="black", linewidth=1.2, linestyle="-",
                   label="expert level")
    ax.set_xlabel("environment interactions")
    ax.set_ylabel("evaluation return")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)

    table_path = out_path.with_suffix(".tsv")
    write_data_table(series, table_path)
    return out_path, table_path
