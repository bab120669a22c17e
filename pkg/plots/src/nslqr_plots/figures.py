"""Figure generation from sweep results.

All plots aggregate documented CSV columns; nothing is resimulated or
recomputed from model parameters.  Output is deterministic given fixed
input files.
"""

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
# Reproducible SVG ids: by default matplotlib salts them per process.
matplotlib.rcParams["svg.hashsalt"] = "nslqr-plots"
import matplotlib.pyplot as plt
import numpy as np

from .errors import InsufficientPoints, PlotsError
from .frames import ResultsFrame, load_results


@dataclass(frozen=True)
class FigureInfo:
    """What a plotting call produced: the file and how many series it holds."""

    path: str
    series: int
    slope: float | None = None
    slope_se: float | None = None


def _save(fig, out_path) -> None:
    if str(out_path).endswith(".svg"):
        fig.savefig(out_path, metadata={"Date": None})
    else:
        fig.savefig(out_path)
    plt.close(fig)


def fit_loglog(xs, ys) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log x."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(np.unique(xs)) < 3:
        raise InsufficientPoints("need at least 3 distinct axis values")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise PlotsError("log-log fit requires positive values")
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope), float(intercept)


def _slope_se(xs, ys, slope, intercept) -> float:
    lx, ly = np.log(xs), np.log(ys)
    resid = ly - (slope * lx + intercept)
    dof = max(len(lx) - 2, 1)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    if sxx == 0:
        return float("inf")
    return float(np.sqrt(np.sum(resid**2) / dof / sxx))


def plot_regret_curves(results_dir, out_path) -> FigureInfo:
    """Mean cumulative-regret curves per controller with an SE band.

    Requires per-cell trace files; cells of the same controller are
    averaged pointwise over their common horizon prefix.
    """
    frame = load_results(results_dir)
    if not frame.traces:
        raise PlotsError(f"no trace_*.csv files in {results_dir}")
    by_cell = {row["cell"]: row for row in frame.rows}
    series: dict[str, list[np.ndarray]] = {}
    for cell, rows in frame.traces.items():
        if cell not in by_cell:
            continue
        name = by_cell[cell]["controller"]
        series.setdefault(name, []).append(
            np.array([r["cum_regret"] for r in rows])
        )
    if not series:
        raise PlotsError("no trace file matches a results.csv cell")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in sorted(series):
        curves = series[name]
        length = min(len(c) for c in curves)
        stack = np.vstack([c[:length] for c in curves])
        mean = stack.mean(axis=0)
        steps = np.arange(1, length + 1)
        (line,) = ax.plot(steps, mean, label=f"{name} (n={len(curves)})")
        if len(curves) > 1:
            se = stack.std(axis=0, ddof=1) / np.sqrt(len(curves))
            ax.fill_between(steps, mean - se, mean + se,
                            color=line.get_color(), alpha=0.25, linewidth=0)
    ax.set_xlabel("step")
    ax.set_ylabel("cumulative regret")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)
    return FigureInfo(path=str(out_path), series=len(series))


def plot_scaling(results_dir, axis, out_path) -> FigureInfo:
    """Log-log scatter of final regret against T or V_T with a fitted slope.

    Draws the fitted line with its slope and standard error in the legend
    and a 3/5-slope reference line through the first fitted point.
    """
    if axis not in ("T", "V_T"):
        raise PlotsError(f"axis must be 'T' or 'V_T', got {axis!r}")
    frame = load_results(results_dir)
    groups = frame.group_by(axis)
    xs = np.array(sorted(k[0] for k in groups))
    if len(xs) < 3:
        raise InsufficientPoints(
            f"need at least 3 distinct {axis} values, found {len(xs)}"
        )
    means = np.array([
        np.mean([row["regret"] for row in groups[(x,)]]) for x in xs
    ])
    slope, intercept = fit_loglog(xs, means)
    se = _slope_se(xs, means, slope, intercept)

    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for x in xs:
        vals = [row["regret"] for row in groups[(x,)]]
        ax.plot([x] * len(vals), vals, "o", color="C0", alpha=0.4, ms=4)
    grid = np.array([xs[0], xs[-1]], dtype=float)
    ax.plot(grid, np.exp(intercept) * grid**slope, "C1-",
            label=f"fit: slope {slope:.3f} +/- {se:.3f}")
    ref = means[0] * (grid / grid[0]) ** 0.6
    ax.plot(grid, ref, "k--", alpha=0.6, label="slope 3/5 reference")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(axis)
    ax.set_ylabel("final regret")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)
    return FigureInfo(path=str(out_path), series=1, slope=slope, slope_se=se)


def plot_comparison(results_dir, out_path) -> FigureInfo:
    """Final-regret box chart per controller, one panel per (T, V_T) cell."""
    frame = load_results(results_dir)
    if not frame.rows:
        raise PlotsError("results.csv has no rows")
    panels = frame.group_by("T", "V_T")
    names = frame.controllers()
    fig, axes = plt.subplots(
        1, len(panels), figsize=(4.0 * len(panels), 4.5), squeeze=False
    )
    for ax, (key, rows) in zip(axes[0], sorted(panels.items())):
        data = []
        labels = []
        for name in names:
            vals = [r["regret"] for r in rows if r["controller"] == name]
            if vals:
                data.append(vals)
                labels.append(name)
        ax.boxplot(data, tick_labels=labels)
        ax.set_title(f"T={key[0]}, V_T={key[1]:g}")
        ax.set_ylabel("final regret")
        ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    _save(fig, out_path)
    return FigureInfo(path=str(out_path), series=len(names))
