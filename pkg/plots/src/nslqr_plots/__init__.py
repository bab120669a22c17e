"""Figure generation for nslqr sweep output."""

from .errors import InsufficientPoints, MissingColumns, PlotsError
from .figures import (
    FigureInfo,
    fit_loglog,
    plot_comparison,
    plot_regret_curves,
    plot_scaling,
)
from .frames import RESULT_COLUMNS, TRACE_COLUMNS, ResultsFrame, load_results

__version__ = "0.1.0"

__all__ = [
    "FigureInfo",
    "InsufficientPoints",
    "MissingColumns",
    "PlotsError",
    "RESULT_COLUMNS",
    "ResultsFrame",
    "TRACE_COLUMNS",
    "fit_loglog",
    "load_results",
    "plot_comparison",
    "plot_regret_curves",
    "plot_scaling",
]
