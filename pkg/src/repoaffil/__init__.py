"""Institution-affiliated repository discovery, classification, and analysis."""

__version__ = "0.1.0"
