"""Publication-style figures for mtelab CSV artifacts."""

__version__ = "0.1.0"

from .render import FigureJob, SchemaError, render  # noqa: F401
