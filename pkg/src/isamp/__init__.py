"""Sample-size theory and diagnostics for importance sampling."""

__version__ = "0.1.0"
