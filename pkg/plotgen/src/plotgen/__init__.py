"""Batch figure rendering for the emech exporter's CSV/JSON files.

This package never imports the simulation code; it reads only the
exported tables and their sidecars, so it can run anywhere the data
files are copied to.
"""

from .figures import FigureSpec, SchemaError, build_figure, render

__all__ = ["FigureSpec", "SchemaError", "build_figure", "render"]
__version__ = "0.1.0"
