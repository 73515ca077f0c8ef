"""Render variance curves and diagnostic scatters from isingmix CSV output."""

from .render import PlotSpec, RenderResult, SchemaError, render

__all__ = ["PlotSpec", "RenderResult", "SchemaError", "render"]

__version__ = "0.1.0"
