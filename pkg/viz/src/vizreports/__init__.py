"""Static SVG/HTML rendering of exported spatio-temporal topic pattern reports."""

__version__ = "0.1.0"

from .bundle import Component, ReportBundle, SchemaError, load_bundle  # noqa: F401
from .render import (  # noqa: F401
    render_report,
    render_spatial,
    render_temporal,
    render_topics,
)
