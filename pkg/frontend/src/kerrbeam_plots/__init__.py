"""Figure rendering for kerrbeam CSV outputs.

This package never recomputes physics: every data trace it draws is taken
verbatim from a CSV produced by the ``kerrbeam`` CLI, so plotted arrays can
be spot-checked against the files.
"""

from .csvio import MissingColumnError, read_csv
from .figures import FigureResult, extract_line, plot_fig1, plot_fig2
from .spec import FigureSpec, SpecError, load_spec

__all__ = [
    "FigureResult",
    "FigureSpec",
    "MissingColumnError",
    "SpecError",
    "extract_line",
    "load_spec",
    "plot_fig1",
    "plot_fig2",
    "read_csv",
]
