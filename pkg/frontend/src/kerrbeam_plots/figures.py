"""Render fig1/fig2 from kerrbeam CSV outputs.

Every data trace is drawn verbatim from its CSV column (no unit scaling, no
smoothing), so `extract_line` on the returned figure reproduces the file
contents exactly.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .csvio import read_csv  # noqa: E402
from .spec import FigureSpec  # noqa: E402

# Deterministic output: fixed clip-path hash salt, no embedded timestamps.
matplotlib.rcParams["svg.hashsalt"] = "kerrbeam"

_FIGSIZE = (6.4, 4.2)
_DPI = 160


@dataclass
class FigureResult:
    figure: "plt.Figure"
    svg_path: str
    png_path: str


def extract_line(figure: "plt.Figure", gid: str) -> tuple[np.ndarray, np.ndarray]:
    """Return the (x, y) arrays of the artist with the given gid."""
    for ax in figure.axes:
        for line in ax.lines:
            if line.get_gid() == gid:
                return np.asarray(line.get_xdata()), np.asarray(line.get_ydata())
    raise KeyError(f"no line with gid {gid!r}")


def _save(fig: "plt.Figure", spec: FigureSpec) -> FigureResult:
    outdir = os.path.dirname(spec.output_base)
    if outdir:
        os.makedirs(outdir, exist_ok=True)
    fig.savefig(spec.svg_path, format="svg", metadata={"Date": None})
    fig.savefig(spec.png_path, format="png", dpi=_DPI,
                metadata={"Software": None})
    return FigureResult(figure=fig, svg_path=spec.svg_path,
                        png_path=spec.png_path)


def _finish(ax: "plt.Axes", spec: FigureSpec, xlabel: str, ylabel: str) -> None:
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if spec.title:
        ax.set_title(spec.title)
    if spec.xlim is not None:
        ax.set_xlim(*spec.xlim)
    if spec.ylim is not None:
        ax.set_ylim(*spec.ylim)
    ax.legend(frameon=False)


def plot_fig1(spec: FigureSpec) -> FigureResult:
    """Minimum quadrature variance vs time, one curve per (chi, alpha) set."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for i, curve in enumerate(spec.curves):
        cols = read_csv(curve.csv, required=("t_s", "var_min"))
        line, = ax.plot(cols["t_s"], cols["var_min"], color="black",
                        linestyle=curve.linestyle, label=curve.label)
        line.set_gid(f"curve{i}")
    if spec.log_y:
        ax.set_yscale("log")
    _finish(ax, spec, "time (s)", "minimum quadrature variance")
    return _save(fig, spec)


def plot_fig2(spec: FigureSpec) -> FigureResult:
    """Squeezed/antisqueezed TWA variances vs time with analytic overlays.

    Solid traces are the stochastic simulation with shaded +-1 se bands;
    dashed traces are the single-mode analytic prediction. An analytic CSV
    without a time axis (or a single row) is drawn as constant levels; a
    mismatched time grid is interpolated with a warning.
    """
    cols = read_csv(spec.quadrature_csv,
                    required=("t_s", "var_sq", "se_sq", "var_anti", "se_anti"))
    acols = read_csv(spec.analytic_csv,
                     required=("var_sq_analytic", "var_anti_analytic"))
    t = cols["t_s"]

    def analytic_on(tgrid: np.ndarray, name: str) -> np.ndarray:
        vals = acols[name]
        if "t_s" not in acols or len(vals) == 1:
            return np.full(len(tgrid), vals[0] if len(vals) else np.nan)
        at = acols["t_s"]
        if len(at) == len(tgrid) and np.array_equal(at, tgrid):
            return vals
        warnings.warn(
            f"{spec.analytic_csv}: time grid differs from "
            f"{spec.quadrature_csv}; interpolating {name}", stacklevel=2)
        return np.interp(tgrid, at, vals)

    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for name, se_name, color in (("var_sq", "se_sq", "tab:blue"),
                                 ("var_anti", "se_anti", "tab:red")):
        line, = ax.plot(t, cols[name], color=color, linestyle="-", label=name)
        line.set_gid(name)
        ax.fill_between(t, cols[name] - cols[se_name],
                        cols[name] + cols[se_name], color=color, alpha=0.25,
                        linewidth=0)
        aname = name + "_analytic"
        aline, = ax.plot(t, analytic_on(t, aname), color=color, linestyle="--",
                         label=aname)
        aline.set_gid(aname)
    ax.axhline(1.0, color="gray", linewidth=0.8)
    if spec.log_y:
        ax.set_yscale("log")
    _finish(ax, spec, "time (s)", "quadrature variance")
    return _save(fig, spec)
