"""Time-dependent distance oracles built from landmark travel-time summaries."""

__version__ = "0.1.0"
