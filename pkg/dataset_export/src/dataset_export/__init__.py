"""Public graph benchmark exporter for the neutral container format."""

__version__ = "0.1.0"
