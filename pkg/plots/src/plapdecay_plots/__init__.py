"""Decay-curve and envelope-overlay figures for plapdecay CSV outputs."""

from .render import (PlotSpec, SchemaError, read_fitted_constants,
                     read_series, read_theory, render)

__version__ = "0.1.0"

__all__ = ["PlotSpec", "SchemaError", "read_fitted_constants", "read_series",
           "read_theory", "render"]
