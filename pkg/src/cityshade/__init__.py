"""cityshade: accumulated shadow analysis for extruded city models."""

__version__ = "0.1.0"
